use serde::{Deserialize, Serialize};

use super::schema::ONE_HOT_MAX_CARDINALITY;
use crate::error::{Error, Result};

/// `z -> [sin(w_1 z), sin(w_2 z), ...]`.
pub fn positional_encode(z: f64, frequencies: &[f64]) -> Vec<f64> {
    frequencies.iter().map(|w| (w * z).sin()).collect()
}

/// One-hot vector for `value`; an unknown value maps to all zeros.
pub fn encode_categorical(value: &str, vocabulary: &[String]) -> Vec<f64> {
    let mut out = vec![0.0; vocabulary.len()];
    if let Some(i) = vocabulary.iter().position(|v| v == value) {
        out[i] = 1.0;
    }
    out
}

/// Inverse of [`encode_categorical`] for exact one-hot vectors.
pub fn decode_one_hot<'a>(encoded: &[f64], vocabulary: &'a [String]) -> Option<&'a str> {
    let mut hot = encoded.iter().enumerate().filter(|(_, &v)| v != 0.0);
    match (hot.next(), hot.next()) {
        (Some((i, &v)), None) if v == 1.0 => vocabulary.get(i).map(String::as_str),
        _ => None,
    }
}

/// How a categorical feature reaches its encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CategoricalEncoding {
    OneHot,
    /// Integer codes standardized with training-split statistics and then
    /// positionally encoded, used above the one-hot cardinality limit.
    Codes { mean: f64, std: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Categorical {
        vocabulary: Vec<String>,
        encoding: CategoricalEncoding,
    },
    Continuous {
        mean: f64,
        std: f64,
    },
}

/// Typed feature metadata plus everything needed to encode its values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
    pub positional_frequencies: Vec<f64>,
}

/// A raw feature value as it appears in the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Number(f64),
    Label(String),
}

impl std::fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeatureValue::Number(x) => write!(f, "{x}"),
            FeatureValue::Label(s) => f.write_str(s),
        }
    }
}

impl FeatureSpec {
    pub fn categorical(name: impl Into<String>, vocabulary: Vec<String>, frequencies: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if vocabulary.len() < 2 {
            return Err(Error::ingestion(
                None,
                Some(&name),
                format!("categorical feature needs at least 2 values, found {}", vocabulary.len()),
            ));
        }
        let encoding = if vocabulary.len() > ONE_HOT_MAX_CARDINALITY {
            // Placeholder statistics, replaced once the training split is known.
            CategoricalEncoding::Codes { mean: 0.0, std: 1.0 }
        } else {
            CategoricalEncoding::OneHot
        };
        Ok(Self {
            name,
            kind: FeatureKind::Categorical { vocabulary, encoding },
            positional_frequencies: frequencies,
        })
    }

    pub fn continuous(name: impl Into<String>, mean: f64, std: f64, frequencies: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if !(std > 0.0) || !std.is_finite() || !mean.is_finite() {
            return Err(Error::ingestion(
                None,
                Some(&name),
                "constant continuous column cannot be standardized",
            ));
        }
        Ok(Self {
            name,
            kind: FeatureKind::Continuous { mean, std },
            positional_frequencies: frequencies,
        })
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, FeatureKind::Categorical { .. })
    }

    pub fn cardinality(&self) -> Option<usize> {
        match &self.kind {
            FeatureKind::Categorical { vocabulary, .. } => Some(vocabulary.len()),
            FeatureKind::Continuous { .. } => None,
        }
    }

    pub fn vocabulary(&self) -> Option<&[String]> {
        match &self.kind {
            FeatureKind::Categorical { vocabulary, .. } => Some(vocabulary),
            FeatureKind::Continuous { .. } => None,
        }
    }

    /// Width of the vector handed to this feature's encoder.
    pub fn encoded_width(&self) -> usize {
        match &self.kind {
            FeatureKind::Categorical {
                vocabulary,
                encoding: CategoricalEncoding::OneHot,
            } => vocabulary.len(),
            _ => self.positional_frequencies.len(),
        }
    }

    pub fn standardize(&self, x: f64) -> f64 {
        match &self.kind {
            FeatureKind::Continuous { mean, std }
            | FeatureKind::Categorical {
                encoding: CategoricalEncoding::Codes { mean, std },
                ..
            } => (x - mean) / std,
            _ => x,
        }
    }

    /// Encodes a stored column entry: a category code or a raw number.
    pub fn encode_stored(&self, raw: f64, out: &mut Vec<f64>) {
        match &self.kind {
            FeatureKind::Categorical {
                vocabulary,
                encoding: CategoricalEncoding::OneHot,
            } => {
                let start = out.len();
                out.resize(start + vocabulary.len(), 0.0);
                let code = raw as usize;
                if raw >= 0.0 && code < vocabulary.len() {
                    out[start + code] = 1.0;
                }
            }
            _ => out.extend(positional_encode(self.standardize(raw), &self.positional_frequencies)),
        }
    }

    /// Encodes a raw value supplied from outside the table (analysis and
    /// inference). Unknown labels one-hot encode to zeros; for code-encoded
    /// features they are an error since there is no neutral code.
    pub fn encode_value(&self, value: &FeatureValue) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.encoded_width());
        match (&self.kind, value) {
            (FeatureKind::Continuous { .. }, FeatureValue::Number(x)) => self.encode_stored(*x, &mut out),
            (FeatureKind::Continuous { .. }, FeatureValue::Label(s)) => {
                let x: f64 = s.trim().parse().map_err(|_| {
                    Error::Contract(format!("`{s}` is not a number for feature `{}`", self.name))
                })?;
                self.encode_stored(x, &mut out)
            }
            (FeatureKind::Categorical { vocabulary, encoding }, v) => {
                let label = v.to_string();
                match encoding {
                    CategoricalEncoding::OneHot => out = encode_categorical(&label, vocabulary),
                    CategoricalEncoding::Codes { .. } => {
                        let code = self.code_of(&label).ok_or_else(|| {
                            Error::Contract(format!("unknown value `{label}` for feature `{}`", self.name))
                        })?;
                        self.encode_stored(code as f64, &mut out)
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn code_of(&self, label: &str) -> Option<usize> {
        self.vocabulary()?.iter().position(|v| v == label)
    }
}
