//! 1-D Lorenzo prediction with error-controlled linear-scaling quantization.

use alloc::vec::Vec;

use super::CodecError;

/// Code reserved for values that cannot be quantized within the bound.
pub const ESCAPE_CODE: u32 = 0;

/// Quantization codes for one array, `len == element_count`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QuantStream {
    pub codes: Vec<u32>,
    pub quant_bins: u32,
}

/// A value stored verbatim as its IEEE-754 bit pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Escape {
    pub position: u32,
    pub raw_bits: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub stream: QuantStream,
    pub escapes: Vec<Escape>,
    pub reconstructed: Vec<f32>,
}

pub(crate) fn check_params(eb: f64, quant_bins: u32) -> Result<(), CodecError> {
    if !(eb.is_finite() && eb > 0.0) {
        return Err(CodecError::InvalidErrorBound(eb));
    }
    if quant_bins < 4 || !quant_bins.is_multiple_of(2) {
        return Err(CodecError::InvalidQuantBins(quant_bins));
    }
    Ok(())
}

/// Decoder-side reconstruction; the encoder must use this exact expression.
#[inline]
pub(crate) fn reconstruct(prediction: f32, offset: i64, step: f64) -> f32 {
    (f64::from(prediction) + offset as f64 * step) as f32
}

/// Predicts each value from the previous *reconstructed* value and quantizes
/// the residual in steps of `2·eb`.
///
/// A value is escaped when its code falls outside `[1, quant_bins)` or when
/// rounding the reconstruction to `f32` would break the bound (or make the
/// code unstable under re-quantization).
pub fn predict_quantize(values: &[f32], eb: f64, quant_bins: u32) -> Result<Quantized, CodecError> {
    check_params(eb, quant_bins)?;
    if values.len() > u32::MAX as usize {
        return Err(CodecError::TooLarge(values.len()));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(CodecError::NonFinite { position: i });
    }

    let half = i64::from(quant_bins / 2);
    let step = 2.0 * eb;
    let lo = (1 - half) as f64;
    let hi = (i64::from(quant_bins) - half) as f64;

    let mut codes = Vec::with_capacity(values.len());
    let mut escapes = Vec::new();
    let mut reconstructed = Vec::with_capacity(values.len());
    let mut prediction = 0.0f32;

    for (i, &v) in values.iter().enumerate() {
        let x = f64::from(v);
        let q = libm::round((x - f64::from(prediction)) / step);
        let mut accepted = None;
        if q >= lo && q < hi {
            let offset = q as i64;
            let r = reconstruct(prediction, offset, step);
            if r.is_finite()
                && libm::fabs(f64::from(r) - x) <= eb
                && libm::round((f64::from(r) - f64::from(prediction)) / step) == q
            {
                accepted = Some(((offset + half) as u32, r));
            }
        }
        match accepted {
            Some((code, r)) => {
                codes.push(code);
                reconstructed.push(r);
                prediction = r;
            }
            None => {
                codes.push(ESCAPE_CODE);
                escapes.push(Escape { position: i as u32, raw_bits: v.to_bits() });
                reconstructed.push(v);
                prediction = v;
            }
        }
    }

    Ok(Quantized {
        stream: QuantStream { codes, quant_bins },
        escapes,
        reconstructed,
    })
}

/// Inverse of [`predict_quantize`].
pub fn dequantize(stream: &QuantStream, escapes: &[Escape], eb: f64) -> Result<Vec<f32>, CodecError> {
    check_params(eb, stream.quant_bins)?;
    let n = stream.codes.len();
    if escapes.windows(2).any(|w| w[0].position >= w[1].position) {
        return Err(CodecError::Corrupt("escape positions not strictly increasing"));
    }
    if escapes.last().is_some_and(|e| e.position as usize >= n) {
        return Err(CodecError::Corrupt("escape position out of range"));
    }

    let half = i64::from(stream.quant_bins / 2);
    let step = 2.0 * eb;
    let mut out = Vec::with_capacity(n);
    let mut prediction = 0.0f32;
    let mut pending = escapes.iter().peekable();
    for (i, &code) in stream.codes.iter().enumerate() {
        let value = if code == ESCAPE_CODE {
            match pending.next() {
                Some(e) if e.position as usize == i => f32::from_bits(e.raw_bits),
                _ => return Err(CodecError::Corrupt("escape marker without escape value")),
            }
        } else {
            if code >= stream.quant_bins {
                return Err(CodecError::Corrupt("quantization code out of range"));
            }
            if pending.peek().is_some_and(|e| e.position as usize == i) {
                return Err(CodecError::Corrupt("escape value at a coded position"));
            }
            reconstruct(prediction, i64::from(code) - half, step)
        };
        out.push(value);
        prediction = value;
    }
    if pending.next().is_some() {
        return Err(CodecError::Corrupt("unused escape values"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn constant_stream_has_no_escapes() {
        let q = predict_quantize(&[0.5, 0.5, 0.5], 1e-3, 65536).unwrap();
        assert!(q.escapes.is_empty());
        assert!(q.stream.codes.iter().all(|&c| c != ESCAPE_CODE));
        for r in &q.reconstructed {
            assert!((f64::from(*r) - 0.5).abs() <= 1e-3);
        }
        // after the first step the residual is zero
        assert_eq!(q.stream.codes[1], 32768);
        assert_eq!(q.stream.codes[2], 32768);
    }

    #[test]
    fn empty_input() {
        let q = predict_quantize(&[], 0.1, 256).unwrap();
        assert!(q.stream.codes.is_empty());
        assert!(q.escapes.is_empty());
        assert!(q.reconstructed.is_empty());
    }

    #[test]
    fn non_finite_rejected() {
        assert_eq!(
            predict_quantize(&[1.0, f32::NAN], 0.1, 256),
            Err(CodecError::NonFinite { position: 1 })
        );
        assert!(predict_quantize(&[f32::INFINITY], 0.1, 256).is_err());
    }

    #[test]
    fn bad_parameters_rejected() {
        assert!(predict_quantize(&[1.0], 0.0, 256).is_err());
        assert!(predict_quantize(&[1.0], -1.0, 256).is_err());
        assert!(predict_quantize(&[1.0], f64::NAN, 256).is_err());
        assert!(predict_quantize(&[1.0], 0.1, 255).is_err());
        assert!(predict_quantize(&[1.0], 0.1, 2).is_err());
    }

    #[test]
    fn out_of_range_residual_escapes_exactly() {
        // 4 bins: codes 1..3 cover offsets -1..1
        let values = [0.0f32, 10.0, 10.05, -3.25];
        let q = predict_quantize(&values, 0.1, 4).unwrap();
        assert_eq!(q.stream.codes[0], 2);
        assert_eq!(q.stream.codes[1], ESCAPE_CODE);
        assert_eq!(q.escapes[0], Escape { position: 1, raw_bits: 10.0f32.to_bits() });
        assert_eq!(q.reconstructed[1], 10.0);
        assert_eq!(q.stream.codes[3], ESCAPE_CODE);
        let back = dequantize(&q.stream, &q.escapes, 0.1).unwrap();
        assert_eq!(back, q.reconstructed);
    }

    #[test]
    fn large_magnitudes_escape_when_f32_rounding_breaks_bound() {
        // ulp(1e6) = 0.0625 > 2·eb, so a tiny bound cannot be honoured
        let values = [1.0e6f32, 1.0e6 + 0.125];
        let q = predict_quantize(&values, 1e-4, 65536).unwrap();
        for (r, v) in q.reconstructed.iter().zip(values) {
            assert!((f64::from(*r) - f64::from(v)).abs() <= 1e-4);
        }
    }

    #[test]
    fn mismatched_escapes_are_corrupt() {
        let stream = QuantStream { codes: vec![2, ESCAPE_CODE], quant_bins: 4 };
        assert!(dequantize(&stream, &[], 0.1).is_err());
        let e = Escape { position: 0, raw_bits: 0 };
        assert!(dequantize(&stream, &[e], 0.1).is_err());
        let e1 = Escape { position: 1, raw_bits: 0 };
        assert!(dequantize(&stream, &[e1, e1], 0.1).is_err());
    }
}
