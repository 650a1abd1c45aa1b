//! Componentwise complex rotations on split real/imaginary vectors.

use super::EmbedError;

/// Component moduli below this make relation inference undefined.
pub const MODULUS_EPS: f64 = 1e-12;

fn check(expected: usize, got: &[&[f64]]) -> Result<(), EmbedError> {
    for v in got {
        if v.len() != expected {
            return Err(EmbedError::DimensionMismatch {
                expected,
                got: v.len(),
            });
        }
    }
    Ok(())
}

/// Rotates the head by the relation: `t + i t_i = (h + i h_i)(cos + i sin)`.
pub fn infer_tail(h: &[f64], h_i: &[f64], cos_r: &[f64], sin_ri: &[f64]) -> Result<(Vec<f64>, Vec<f64>), EmbedError> {
    check(h.len(), &[h_i, cos_r, sin_ri])?;
    let t = (0..h.len()).map(|k| h[k] * cos_r[k] - h_i[k] * sin_ri[k]).collect();
    let t_i = (0..h.len()).map(|k| h[k] * sin_ri[k] + h_i[k] * cos_r[k]).collect();
    Ok((t, t_i))
}

/// Rotation taking the head to the tail, i.e. `(t + i t_i) / (h + i h_i)`.
pub fn infer_relation(h: &[f64], h_i: &[f64], t: &[f64], t_i: &[f64]) -> Result<(Vec<f64>, Vec<f64>), EmbedError> {
    check(h.len(), &[h_i, t, t_i])?;
    let mut cos_r = Vec::with_capacity(h.len());
    let mut sin_ri = Vec::with_capacity(h.len());
    for k in 0..h.len() {
        let m = h[k] * h[k] + h_i[k] * h_i[k];
        if m < MODULUS_EPS {
            return Err(EmbedError::ZeroModulus { component: k });
        }
        cos_r.push((h[k] * t[k] + h_i[k] * t_i[k]) / m);
        sin_ri.push((h[k] * t_i[k] - h_i[k] * t[k]) / m);
    }
    Ok((cos_r, sin_ri))
}

/// Inverse rotation of the tail: `(t + i t_i)(cos - i sin)`.
pub fn infer_head(t: &[f64], t_i: &[f64], cos_r: &[f64], sin_ri: &[f64]) -> Result<(Vec<f64>, Vec<f64>), EmbedError> {
    check(t.len(), &[t_i, cos_r, sin_ri])?;
    let h = (0..t.len()).map(|k| t[k] * cos_r[k] + t_i[k] * sin_ri[k]).collect();
    let h_i = (0..t.len()).map(|k| t_i[k] * cos_r[k] - t[k] * sin_ri[k]).collect();
    Ok((h, h_i))
}

/// Squared distance between the rotated head and the tail.
pub fn score(
    h: &[f64],
    h_i: &[f64],
    cos_r: &[f64],
    sin_ri: &[f64],
    t: &[f64],
    t_i: &[f64],
) -> Result<f64, EmbedError> {
    check(h.len(), &[h_i, cos_r, sin_ri, t, t_i])?;
    Ok(score_unchecked(h, h_i, cos_r, sin_ri, t, t_i))
}

pub(crate) fn score_unchecked(h: &[f64], h_i: &[f64], c: &[f64], s: &[f64], t: &[f64], t_i: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 0..h.len() {
        let u = h[k] * c[k] - h_i[k] * s[k] - t[k];
        let v = h[k] * s[k] + h_i[k] * c[k] - t_i[k];
        acc += u * u + v * v;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[derive(Clone, Copy, Debug, PartialEq)]
    struct C(f64, f64);

    impl C {
        fn mul(self, o: C) -> C {
            C(self.0 * o.0 - self.1 * o.1, self.0 * o.1 + self.1 * o.0)
        }
        fn div(self, o: C) -> C {
            let m = o.0 * o.0 + o.1 * o.1;
            let n = self.mul(C(o.0, -o.1));
            C(n.0 / m, n.1 / m)
        }
        fn norm2(self) -> f64 {
            self.0 * self.0 + self.1 * self.1
        }
    }

    fn split(v: &[C]) -> (Vec<f64>, Vec<f64>) {
        (v.iter().map(|c| c.0).collect(), v.iter().map(|c| c.1).collect())
    }

    #[test]
    fn identity_and_quarter_turn() {
        let (t, ti) = infer_tail(&[1.0, 0.3], &[0.0, -2.0], &[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert_eq!((t, ti), (vec![1.0, 0.3], vec![0.0, -2.0]));
        let (t, ti) = infer_tail(&[1.0], &[0.0], &[0.0], &[1.0]).unwrap();
        assert_eq!((t, ti), (vec![0.0], vec![1.0]));
        let (c, s) = infer_relation(&[0.7], &[-0.2], &[0.7], &[-0.2]).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-15 && s[0].abs() < 1e-15);
        let (c, s) = infer_relation(&[1.0], &[0.0], &[0.0], &[1.0]).unwrap();
        assert_eq!((c, s), (vec![0.0], vec![1.0]));
        let (h, hi) = infer_head(&[0.4], &[0.9], &[1.0], &[0.0]).unwrap();
        assert_eq!((h, hi), (vec![0.4], vec![0.9]));
    }

    #[test]
    fn score_of_one_minus_i() {
        assert_eq!(score(&[1.0], &[0.0], &[1.0], &[0.0], &[0.0], &[1.0]).unwrap(), 2.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            infer_tail(&[1.0, 2.0], &[0.0], &[1.0, 1.0], &[0.0, 0.0]),
            Err(EmbedError::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(matches!(
            infer_relation(&[1.0, 0.0], &[0.0, 1e-7], &[1.0, 1.0], &[0.0, 0.0]),
            Err(EmbedError::ZeroModulus { component: 1 })
        ));
        assert!(score(&[1.0], &[0.0], &[1.0], &[0.0], &[0.0], &[]).is_err());
    }

    fn complex_vec(n: usize) -> impl Strategy<Value = Vec<C>> {
        prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0).prop_map(|(a, b)| C(a, b)), n)
    }

    fn rotation(n: usize) -> impl Strategy<Value = Vec<C>> {
        prop::collection::vec((-std::f64::consts::PI..std::f64::consts::PI).prop_map(|a| C(a.cos(), a.sin())), n)
    }

    proptest! {
        #[test]
        fn tail_matches_complex_product((h, r, t) in (1usize..8).prop_flat_map(|n| (complex_vec(n), rotation(n), complex_vec(n)))) {
            let (hr, hi) = split(&h);
            let (c, s) = split(&r);
            let (tr, ti) = infer_tail(&hr, &hi, &c, &s).unwrap();
            for k in 0..h.len() {
                let want = h[k].mul(r[k]);
                prop_assert!((tr[k] - want.0).abs() < 1e-12 && (ti[k] - want.1).abs() < 1e-12);
            }
            let (xr, xi) = split(&t);
            let want: f64 = (0..h.len()).map(|k| C(h[k].mul(r[k]).0 - t[k].0, h[k].mul(r[k]).1 - t[k].1).norm2()).sum();
            let got = score(&hr, &hi, &c, &s, &xr, &xi).unwrap();
            prop_assert!((got - want).abs() <= 1e-9 * want.max(1.0));
            prop_assert!(score(&hr, &hi, &c, &s, &tr, &ti).unwrap() <= 1e-12 * h.len() as f64);
        }

        #[test]
        fn head_matches_complex_division((t, r) in (1usize..8).prop_flat_map(|n| (complex_vec(n), rotation(n)))) {
            let (tr, ti) = split(&t);
            let (c, s) = split(&r);
            let (h, hi) = infer_head(&tr, &ti, &c, &s).unwrap();
            for k in 0..t.len() {
                let want = t[k].div(r[k]);
                prop_assert!((h[k] - want.0).abs() < 1e-12 && (hi[k] - want.1).abs() < 1e-12);
            }
        }

        #[test]
        fn round_trips((h, r) in (1usize..8).prop_flat_map(|n| (complex_vec(n), rotation(n)))) {
            prop_assume!(h.iter().all(|c| c.norm2() > 1e-6));
            let (hr, hi) = split(&h);
            let (c, s) = split(&r);
            let (tr, ti) = infer_tail(&hr, &hi, &c, &s).unwrap();
            let (br, bi) = infer_head(&tr, &ti, &c, &s).unwrap();
            let (rc, rs) = infer_relation(&hr, &hi, &tr, &ti).unwrap();
            for k in 0..h.len() {
                prop_assert!((br[k] - hr[k]).abs() < 1e-9 && (bi[k] - hi[k]).abs() < 1e-9);
                prop_assert!((rc[k] - c[k]).abs() < 1e-9 && (rs[k] - s[k]).abs() < 1e-9);
                prop_assert!((rc[k] * rc[k] + rs[k] * rs[k] - 1.0).abs() < 1e-9);
            }
        }
    }
}
