//! Double-double helpers. Pointwise data stays in `f64`; sums of products
//! that define matrices, factors and quadratic forms are carried in
//! double-double so that severe cancellation cannot destroy definiteness.

pub use faer::fx128 as Dd;

const LANES: usize = 16;

pub const ZERO: Dd = Dd::ZERO;

#[inline(always)]
pub fn from(x: f64) -> Dd {
    Dd::from_f64(x)
}

#[inline(always)]
pub fn to_f64(x: Dd) -> f64 {
    x.0 + x.1
}

#[inline(always)]
pub fn add(a: Dd, b: Dd) -> Dd {
    a.add_accurate(b)
}

#[inline(always)]
pub fn sub(a: Dd, b: Dd) -> Dd {
    a.sub_accurate(b)
}

#[inline(always)]
pub fn mul(a: Dd, b: Dd) -> Dd {
    a * b
}

#[inline(always)]
pub fn scale(a: Dd, x: f64) -> Dd {
    a * Dd::from_f64(x)
}

#[inline(always)]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// `Σ aᵢ bᵢ` with error-free products and a double-double running sum.
pub fn dot(a: &[f64], b: &[f64]) -> Dd {
    assert_eq!(a.len(), b.len());
    #[cfg(target_arch = "x86_64")]
    {
        if simd::has_avx512() {
            // SAFETY: feature presence checked at run time.
            return unsafe { simd::dot_avx512(a, b) };
        }
        if simd::has_avx2() {
            // SAFETY: feature presence checked at run time.
            return unsafe { simd::dot_avx2(a, b) };
        }
    }
    dot_portable(a, b)
}

/// Lane-parallel scalar form of [`dot`]; the reference for the SIMD paths.
pub fn dot_portable(a: &[f64], b: &[f64]) -> Dd {
    let mut hi = [0.0f64; LANES];
    let mut lo = [0.0f64; LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            let p = xa[l] * xb[l];
            let e = xa[l].mul_add(xb[l], -p);
            let (s, t) = two_sum(hi[l], p);
            hi[l] = s;
            lo[l] += t + e;
        }
    }
    tail_and_reduce(hi, lo, ca.remainder(), cb.remainder())
}

fn tail_and_reduce(mut hi: [f64; LANES], mut lo: [f64; LANES], ra: &[f64], rb: &[f64]) -> Dd {
    for (x, y) in ra.iter().zip(rb) {
        let p = x * y;
        let e = x.mul_add(*y, -p);
        let (s, t) = two_sum(hi[0], p);
        hi[0] = s;
        lo[0] += t + e;
    }
    // cascade the high words; their rounding errors join the low words
    let mut sum = hi[0];
    let mut err: f64 = lo.iter().sum();
    for &h in &hi[1..] {
        let (s, t) = two_sum(sum, h);
        sum = s;
        err += t;
    }
    add(from(sum), from(err))
}

#[cfg(target_arch = "x86_64")]
mod simd {
    use super::{tail_and_reduce, Dd, LANES};
    use std::arch::x86_64::*;
    use std::sync::OnceLock;

    pub fn has_avx512() -> bool {
        static F: OnceLock<bool> = OnceLock::new();
        *F.get_or_init(|| is_x86_feature_detected!("avx512f"))
    }

    pub fn has_avx2() -> bool {
        static F: OnceLock<bool> = OnceLock::new();
        *F.get_or_init(|| is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma"))
    }

    #[target_feature(enable = "avx2,fma")]
    pub unsafe fn dot_avx2(a: &[f64], b: &[f64]) -> Dd {
        const W: usize = 4;
        let n = a.len() / LANES * LANES;
        let mut h = [_mm256_setzero_pd(); LANES / W];
        let mut l = [_mm256_setzero_pd(); LANES / W];
        let (pa, pb) = (a.as_ptr(), b.as_ptr());
        let mut i = 0;
        while i < n {
            for v in 0..LANES / W {
                // SAFETY: i + LANES <= n <= len
                let x = unsafe { _mm256_loadu_pd(pa.add(i + v * W)) };
                let y = unsafe { _mm256_loadu_pd(pb.add(i + v * W)) };
                let p = _mm256_mul_pd(x, y);
                let e = _mm256_fmsub_pd(x, y, p);
                let s = _mm256_add_pd(h[v], p);
                let bb = _mm256_sub_pd(s, h[v]);
                let t = _mm256_add_pd(_mm256_sub_pd(h[v], _mm256_sub_pd(s, bb)), _mm256_sub_pd(p, bb));
                h[v] = s;
                l[v] = _mm256_add_pd(l[v], _mm256_add_pd(t, e));
            }
            i += LANES;
        }
        let mut hi = [0.0f64; LANES];
        let mut lo = [0.0f64; LANES];
        for v in 0..LANES / W {
            // SAFETY: v * W + W <= LANES
            unsafe {
                _mm256_storeu_pd(hi.as_mut_ptr().add(v * W), h[v]);
                _mm256_storeu_pd(lo.as_mut_ptr().add(v * W), l[v]);
            }
        }
        tail_and_reduce(hi, lo, &a[n..], &b[n..])
    }

    #[target_feature(enable = "avx512f")]
    pub unsafe fn dot_avx512(a: &[f64], b: &[f64]) -> Dd {
        const W: usize = 8;
        let n = a.len() / LANES * LANES;
        let mut h = [_mm512_setzero_pd(); LANES / W];
        let mut l = [_mm512_setzero_pd(); LANES / W];
        let (pa, pb) = (a.as_ptr(), b.as_ptr());
        let mut i = 0;
        while i < n {
            for v in 0..LANES / W {
                // SAFETY: i + LANES <= n <= len
                let x = unsafe { _mm512_loadu_pd(pa.add(i + v * W)) };
                let y = unsafe { _mm512_loadu_pd(pb.add(i + v * W)) };
                let p = _mm512_mul_pd(x, y);
                let e = _mm512_fmsub_pd(x, y, p);
                let s = _mm512_add_pd(h[v], p);
                let bb = _mm512_sub_pd(s, h[v]);
                let t = _mm512_add_pd(_mm512_sub_pd(h[v], _mm512_sub_pd(s, bb)), _mm512_sub_pd(p, bb));
                h[v] = s;
                l[v] = _mm512_add_pd(l[v], _mm512_add_pd(t, e));
            }
            i += LANES;
        }
        let mut hi = [0.0f64; LANES];
        let mut lo = [0.0f64; LANES];
        for v in 0..LANES / W {
            // SAFETY: v * W + W <= LANES
            unsafe {
                _mm512_storeu_pd(hi.as_mut_ptr().add(v * W), h[v]);
                _mm512_storeu_pd(lo.as_mut_ptr().add(v * W), l[v]);
            }
        }
        tail_and_reduce(hi, lo, &a[n..], &b[n..])
    }
}

/// Parses a decimal literal such as `-1.10264158103257716411811` or
/// `-7.3665e-6` to double-double accuracy.
pub fn parse(text: &str) -> Option<Dd> {
    let t = text.trim();
    let (neg, t) = match t.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (mant, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().ok()?),
        None => (t, 0),
    };
    let (int, frac) = mant.split_once('.').unwrap_or((mant, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    let ten = from(10.0);
    let mut v = ZERO;
    for c in int.chars().chain(frac.chars()) {
        let d = c.to_digit(10)?;
        v = add(mul(v, ten), from(d as f64));
    }
    let e = exp - frac.len() as i32;
    let p = (0..e.unsigned_abs()).fold(from(1.0), |a, _| mul(a, ten));
    v = if e >= 0 { mul(v, p) } else { v / p };
    Some(if neg { -v } else { v })
}

/// Double-double inner product of double-double vectors.
pub fn dot_dd(a: &[Dd], b: &[Dd]) -> Dd {
    a.iter().zip(b).fold(ZERO, |acc, (x, y)| add(acc, mul(*x, *y)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_recovers_cancelled_terms() {
        let a = [1e16, 1.0, -1e16, 1e-3, 3.0, 5.0, 7.0, 11.0, 13.0, 2.0];
        let b = [1.0; 10];
        let got = dot(&a, &b);
        assert_eq!(to_f64(got), 1.0 + 1e-3 + 3.0 + 5.0 + 7.0 + 11.0 + 13.0 + 2.0);
        // (1 + 2⁻³⁰)² keeps its 2⁻⁶⁰ term only in the low word
        let x = 1.0 + 2f64.powi(-30);
        let sq = dot(&[x], &[x]);
        assert_eq!(sq.0, 1.0 + 2f64.powi(-29));
        assert_eq!(sq.1, 2f64.powi(-60));
    }

    #[test]
    fn parse_keeps_digits_beyond_double() {
        let a = parse("-1.10264158103257716411811").unwrap();
        let b = parse("-1.10264158103257716411800").unwrap();
        assert!((to_f64(sub(a, b)) + 1.1e-22).abs() < 1e-30);
        assert_eq!(to_f64(parse("-7.5e-6").unwrap()), -7.5e-6);
        assert_eq!(to_f64(parse("250").unwrap()), 250.0);
        assert!(parse("1.2.3").is_none());
        assert!(parse("").is_none());
    }

    #[test]
    fn vector_path_matches_portable_path() {
        let a: Vec<f64> = (0..101).map(|i| (i as f64 * 0.37).sin() * 1e3f64.powi(i % 5)).collect();
        let b: Vec<f64> = (0..101).map(|i| (i as f64 * 0.11).cos()).collect();
        assert_eq!(dot(&a, &b), dot_portable(&a, &b));
        #[cfg(target_arch = "x86_64")]
        if simd::has_avx2() {
            // SAFETY: feature presence checked above.
            assert_eq!(unsafe { simd::dot_avx2(&a, &b) }, dot_portable(&a, &b));
        }
    }
}
