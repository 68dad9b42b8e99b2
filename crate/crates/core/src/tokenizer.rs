//! Mean scaling, bin quantization and the token vocabulary.
//!
//! A real-valued context is divided by the mean of its absolute values, each
//! scaled value is mapped to one of `B` bins by ordered edges, and bins are
//! laid out after two special tokens:
//!
//! | id        | meaning     |
//! |-----------|-------------|
//! | 0         | PAD         |
//! | 1         | EOS         |
//! | 2..=B+1   | bins 1..=B  |

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD_ID: TokenId = 0;
pub const EOS_ID: TokenId = 1;
const FIRST_BIN_ID: TokenId = 2;

/// Mean-absolute scaling with a fixed zero offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    scale: f64,
}

impl Scaler {
    /// Fits `s = mean(|x|)` on the context, falling back to `s = 1` when the
    /// context is all zeros.
    pub fn fit(context: &[f64]) -> Result<Self> {
        if context.is_empty() {
            return Err(Error::EmptyContext);
        }
        let mut sum = 0.0;
        for &x in context {
            if !x.is_finite() {
                return Err(Error::NonFinite(x));
            }
            sum += x.abs();
        }
        let scale = if sum == 0.0 { 1.0 } else { sum / context.len() as f64 };
        Ok(Self { scale })
    }

    pub fn with_scale(scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Domain(format!("scale must be positive, got {scale}")));
        }
        Ok(Self { scale })
    }

    pub fn offset(&self) -> f64 {
        0.0
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn apply(&self, x: f64) -> f64 {
        x / self.scale
    }

    pub fn invert(&self, x: f64) -> f64 {
        x * self.scale
    }
}

/// Ordered bin centers and the edges separating them.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantizer {
    centers: Vec<f64>,
    edges: Vec<f64>,
}

impl Quantizer {
    /// `bins` centers evenly spaced over `[-range, range]`, edges at midpoints.
    pub fn uniform(bins: usize, range: f64) -> Result<Self> {
        if bins < 2 {
            return Err(Error::Config(format!("need at least 2 bins, got {bins}")));
        }
        if !(range.is_finite() && range > 0.0) {
            return Err(Error::Config(format!("bin range must be positive, got {range}")));
        }
        let step = 2.0 * range / (bins - 1) as f64;
        let centers: Vec<f64> = (0..bins).map(|i| -range + step * i as f64).collect();
        let edges = centers.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Self::from_parts(centers, edges)
    }

    /// Builds a quantizer from explicit centers and edges, checking that they
    /// interleave as `c_1 < b_1 < c_2 < ... < b_{B-1} < c_B`.
    pub fn from_parts(centers: Vec<f64>, edges: Vec<f64>) -> Result<Self> {
        if centers.len() < 2 || edges.len() + 1 != centers.len() {
            return Err(Error::Config(format!(
                "need B >= 2 centers and B-1 edges, got {} and {}",
                centers.len(),
                edges.len()
            )));
        }
        for (i, &b) in edges.iter().enumerate() {
            if !(centers[i] < b && b < centers[i + 1]) {
                return Err(Error::Config(format!("edge {b} does not separate centers {} and {}", centers[i], centers[i + 1])));
            }
        }
        Ok(Self { centers, edges })
    }

    pub fn bins(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// 1-based bin `j` with `b_{j-1} <= x < b_j`, where `b_0 = -inf` and `b_B = +inf`.
    pub fn quantize(&self, x: f64) -> Result<usize> {
        if !x.is_finite() {
            return Err(Error::NonFinite(x));
        }
        Ok(self.edges.partition_point(|&b| b <= x) + 1)
    }

    /// Center of 1-based bin `j`.
    pub fn dequantize(&self, j: usize) -> Result<f64> {
        if j == 0 || j > self.centers.len() {
            return Err(Error::BadToken(j as TokenId));
        }
        Ok(self.centers[j - 1])
    }

    /// Widest gap between adjacent edges. Bounds the round-trip error for
    /// values inside `[b_1, b_{B-1})`.
    pub fn max_interior_width(&self) -> f64 {
        self.edges
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

/// Token id layout for `B` value bins plus PAD and EOS.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vocabulary {
    bins: usize,
}

impl Vocabulary {
    pub fn new(bins: usize) -> Self {
        Self { bins }
    }

    pub fn size(&self) -> usize {
        self.bins + 2
    }

    pub fn pad_id(&self) -> TokenId {
        PAD_ID
    }

    pub fn eos_id(&self) -> TokenId {
        EOS_ID
    }

    pub fn bin_to_id(&self, bin: usize) -> TokenId {
        debug_assert!(bin >= 1 && bin <= self.bins);
        bin as TokenId + FIRST_BIN_ID - 1
    }

    pub fn id_to_bin(&self, id: TokenId) -> Option<usize> {
        let bin = id.checked_sub(FIRST_BIN_ID - 1)? as usize;
        (id >= FIRST_BIN_ID && bin <= self.bins).then_some(bin)
    }

    pub fn is_value(&self, id: TokenId) -> bool {
        self.id_to_bin(id).is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinLayout {
    Uniform,
}

/// Serializable tokenizer settings, written into run manifests and checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    #[serde(rename = "B")]
    pub bins: usize,
    #[serde(rename = "R")]
    pub range: f64,
    pub layout: BinLayout,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            bins: 128,
            range: 15.0,
            layout: BinLayout::Uniform,
        }
    }
}

impl TokenizerConfig {
    pub fn build(&self) -> Result<Tokenizer> {
        let quantizer = match self.layout {
            BinLayout::Uniform => Quantizer::uniform(self.bins, self.range)?,
        };
        Ok(Tokenizer::new(quantizer))
    }

    pub fn vocab_size(&self) -> usize {
        self.bins + 2
    }
}

/// Token ids together with the scaler that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub ids: Vec<TokenId>,
    pub scaler: Scaler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tokenizer {
    quantizer: Quantizer,
    vocab: Vocabulary,
}

impl Tokenizer {
    pub fn new(quantizer: Quantizer) -> Self {
        let vocab = Vocabulary::new(quantizer.bins());
        Self { quantizer, vocab }
    }

    pub fn quantizer(&self) -> &Quantizer {
        &self.quantizer
    }

    pub fn vocab(&self) -> Vocabulary {
        self.vocab
    }

    /// Token id for a value already divided by the scale.
    pub fn scaled_to_id(&self, x_scaled: f64) -> Result<TokenId> {
        Ok(self.vocab.bin_to_id(self.quantizer.quantize(x_scaled)?))
    }

    /// Scaled-space value (bin center) of a value token.
    pub fn id_to_scaled(&self, id: TokenId) -> Result<f64> {
        let bin = self.vocab.id_to_bin(id).ok_or(Error::BadToken(id))?;
        self.quantizer.dequantize(bin)
    }

    /// Fits a scaler on `context` and tokenizes it.
    pub fn encode(&self, context: &[f64]) -> Result<TokenSequence> {
        let scaler = Scaler::fit(context)?;
        self.encode_with(context, scaler)
    }

    /// Tokenizes `values` under an existing scaler, e.g. a target region that
    /// must share its context's scale.
    pub fn encode_with(&self, values: &[f64], scaler: Scaler) -> Result<TokenSequence> {
        let ids = values
            .iter()
            .map(|&x| self.scaled_to_id(scaler.apply(x)))
            .collect::<Result<_>>()?;
        Ok(TokenSequence { ids, scaler })
    }

    /// Maps value tokens back to bin centers times the scale.
    pub fn decode(&self, tokens: &TokenSequence) -> Result<Vec<f64>> {
        tokens
            .ids
            .iter()
            .map(|&id| Ok(tokens.scaler.invert(self.id_to_scaled(id)?)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_bin() -> Quantizer {
        Quantizer::from_parts(vec![-3.0, -1.0, 1.0, 3.0], vec![-2.0, 0.0, 2.0]).unwrap()
    }

    #[test]
    fn scaler_examples() {
        assert!((Scaler::fit(&[2.0, -2.0, 4.0]).unwrap().scale() - 8.0 / 3.0).abs() < 1e-15);
        assert_eq!(Scaler::fit(&[0.0, 0.0, 0.0]).unwrap().scale(), 1.0);
        assert_eq!(Scaler::fit(&[5.0]).unwrap().scale(), 5.0);
        assert_eq!(Scaler::fit(&[5.0]).unwrap().offset(), 0.0);
        assert!(matches!(Scaler::fit(&[]), Err(Error::EmptyContext)));
    }

    #[test]
    fn quantize_cases() {
        let q = four_bin();
        assert_eq!(q.quantize(-5.0).unwrap(), 1);
        assert_eq!(q.quantize(0.5).unwrap(), 3);
        assert_eq!(q.quantize(-2.0).unwrap(), 2);
        assert_eq!(q.quantize(2.0).unwrap(), 4);
        assert_eq!(q.quantize(1e300).unwrap(), 4);
        assert!(matches!(q.quantize(f64::NAN), Err(Error::NonFinite(_))));
        assert!(matches!(q.quantize(f64::INFINITY), Err(Error::NonFinite(_))));
    }

    #[test]
    fn dequantize_lookup_and_fixed_points() {
        let q = four_bin();
        assert_eq!(q.dequantize(3).unwrap(), 1.0);
        assert_eq!(q.dequantize(1).unwrap(), -3.0);
        assert!(matches!(q.dequantize(0), Err(Error::BadToken(0))));
        assert!(matches!(q.dequantize(5), Err(Error::BadToken(5))));
        let q = Quantizer::uniform(128, 15.0).unwrap();
        for j in 1..=q.bins() {
            assert_eq!(q.quantize(q.dequantize(j).unwrap()).unwrap(), j);
        }
    }

    #[test]
    fn uniform_layout_matches_hand_quantizer() {
        assert_eq!(Quantizer::uniform(4, 3.0).unwrap(), four_bin());
    }

    #[test]
    fn rejects_non_interleaved_parts() {
        assert!(Quantizer::from_parts(vec![0.0, 1.0], vec![1.5]).is_err());
        assert!(Quantizer::from_parts(vec![0.0, 1.0, 2.0], vec![0.5]).is_err());
        assert!(Quantizer::from_parts(vec![0.0], vec![]).is_err());
    }

    #[test]
    fn vocabulary_layout() {
        let v = Vocabulary::new(4);
        assert_eq!(v.size(), 6);
        assert_ne!(v.pad_id(), v.eos_id());
        assert_eq!(v.bin_to_id(1), 2);
        assert_eq!(v.bin_to_id(4), 5);
        assert_eq!(v.id_to_bin(PAD_ID), None);
        assert_eq!(v.id_to_bin(EOS_ID), None);
        assert_eq!(v.id_to_bin(6), None);
        assert_eq!(v.id_to_bin(3), Some(2));
    }

    #[test]
    fn encode_decode_example() {
        let tok = Tokenizer::new(four_bin());
        let seq = tok.encode(&[2.0, -2.0, 4.0]).unwrap();
        let bins: Vec<usize> = seq.ids.iter().map(|&id| tok.vocab().id_to_bin(id).unwrap()).collect();
        assert_eq!(bins, vec![3, 2, 3]);
        let s = 8.0 / 3.0;
        let back = tok.decode(&seq).unwrap();
        for (got, want) in back.iter().zip([s, -s, s]) {
            assert!((got - want).abs() < 1e-12);
        }

        let constant = tok.encode(&[7.0, 7.0, 7.0]).unwrap();
        assert!(constant.ids.iter().all(|&id| id == constant.ids[0]));

        let bad = TokenSequence { ids: vec![EOS_ID], scaler: seq.scaler };
        assert!(matches!(tok.decode(&bad), Err(Error::BadToken(EOS_ID))));
    }

    #[test]
    fn config_serializes_with_short_keys() {
        let json = serde_json::to_string(&TokenizerConfig::default()).unwrap();
        assert_eq!(json, r#"{"B":128,"R":15.0,"layout":"uniform"}"#);
        let back: TokenizerConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, TokenizerConfig::default());
    }
}
