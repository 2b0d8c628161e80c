//! JSON model documents.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{ForcingSeries, Harmonic, ModelSpec, PolyTerm, RestoringForce};
use crate::error::{Error, Result};

/// A period given either as a plain number or as an exact multiple of 2 pi.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PeriodDoc {
    Value(f64),
    TwoPiMultiple { two_pi_multiple: f64 },
}

impl PeriodDoc {
    pub fn value(self) -> f64 {
        match self {
            PeriodDoc::Value(t) => t,
            PeriodDoc::TwoPiMultiple { two_pi_multiple } => 2.0 * PI * two_pi_multiple,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicDoc {
    pub n: u32,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesDoc {
    #[serde(default)]
    pub mean: f64,
    #[serde(default)]
    pub harmonics: Vec<HarmonicDoc>,
    /// Optional; must agree with the model period when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<PeriodDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyTermDoc {
    pub power: u32,
    pub series: SeriesDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RestoringDoc {
    Linear { k: f64 },
    PolyFourier { coeffs: Vec<PolyTermDoc> },
    SinePerturbed { k: f64, delta: f64 },
    PiecewiseLinear { a: SeriesDoc, b: SeriesDoc },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub name: String,
    pub c: f64,
    #[serde(rename = "T")]
    pub period: PeriodDoc,
    pub g: RestoringDoc,
    pub h: SeriesDoc,
}

/// Parses and validates a model document.
pub fn load_model(text: &str) -> Result<ModelSpec> {
    let doc: ModelDocument = serde_json::from_str(text)?;
    doc.to_model()
}

pub fn model_to_document(model: &ModelSpec) -> ModelDocument {
    let g = match model.restoring() {
        RestoringForce::Linear { k } => RestoringDoc::Linear { k: *k },
        RestoringForce::PolyFourier { terms } => RestoringDoc::PolyFourier {
            coeffs: terms
                .iter()
                .map(|t| PolyTermDoc {
                    power: t.power,
                    series: series_doc(&t.coeff),
                })
                .collect(),
        },
        RestoringForce::SinePerturbed { k, delta } => RestoringDoc::SinePerturbed { k: *k, delta: *delta },
        RestoringForce::PiecewiseLinear { a, b } => RestoringDoc::PiecewiseLinear {
            a: series_doc(a),
            b: series_doc(b),
        },
    };
    ModelDocument {
        name: model.name.clone(),
        c: model.damping(),
        period: PeriodDoc::Value(model.period()),
        g,
        h: series_doc(model.forcing()),
    }
}

fn series_doc(s: &ForcingSeries) -> SeriesDoc {
    SeriesDoc {
        mean: s.mean(),
        harmonics: s
            .harmonics()
            .iter()
            .map(|h| HarmonicDoc {
                n: h.order,
                cos: h.cos_coeff,
                sin: h.sin_coeff,
            })
            .collect(),
        period: None,
    }
}

impl SeriesDoc {
    fn to_series(&self, field: &str, model_period: f64) -> Result<ForcingSeries> {
        if let Some(p) = self.period {
            let p = p.value();
            if (p - model_period).abs() > 1e-12 * model_period.max(1.0) {
                return Err(Error::PeriodMismatch {
                    field: field.to_string(),
                    expected: model_period,
                    found: p,
                });
            }
        }
        let harmonics = self
            .harmonics
            .iter()
            .map(|h| Harmonic {
                order: h.n,
                cos_coeff: h.cos,
                sin_coeff: h.sin,
            })
            .collect();
        ForcingSeries::new(model_period, self.mean, harmonics).map_err(|e| match e {
            Error::Config { field: inner, message } => Error::Config {
                field: format!("{field}.{inner}"),
                message,
            },
            other => other,
        })
    }
}

impl ModelDocument {
    pub fn to_model(&self) -> Result<ModelSpec> {
        let period = self.period.value();
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::config("T", format!("period must be positive, got {period}")));
        }
        let g = match &self.g {
            RestoringDoc::Linear { k } => RestoringForce::Linear { k: *k },
            RestoringDoc::SinePerturbed { k, delta } => RestoringForce::SinePerturbed { k: *k, delta: *delta },
            RestoringDoc::PolyFourier { coeffs } => RestoringForce::PolyFourier {
                terms: coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, t)| {
                        Ok(PolyTerm {
                            power: t.power,
                            coeff: t.series.to_series(&format!("g.coeffs[{i}].series"), period)?,
                        })
                    })
                    .collect::<Result<_>>()?,
            },
            RestoringDoc::PiecewiseLinear { a, b } => RestoringForce::PiecewiseLinear {
                a: a.to_series("g.a", period)?,
                b: b.to_series("g.b", period)?,
            },
        };
        let h = self.h.to_series("h", period)?;
        ModelSpec::new(self.name.clone(), self.c, period, g, h)
    }
}
