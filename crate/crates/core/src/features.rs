//! Wavelet feature extraction: four metrics per coefficient array.
//!
//! For each direction the size sequence is decomposed to J levels and each
//! of D_1..D_J and A_J contributes relative energy (percent of the
//! decomposition total), absolute mean, population standard deviation and
//! Shannon entropy of the normalized absolute-coefficient distribution, in
//! that order. Forward block first, then backward: 8J + 8 values total.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{Category, Flow, FlowRow, Label};
use crate::tableio;
use crate::wavelet::{dwt, WaveletDecomposition, WaveletFamily};

pub const FEATURE_TABLE_SCHEMA: &str = "waveflow features v1";

/// Relative energy per coefficient array (D_1..D_J then A_J), as
/// percentages summing to 100. A decomposition with zero total energy
/// yields all zeros.
pub fn rel_energy(decomposition: &WaveletDecomposition) -> Vec<f64> {
    let energies: Vec<f64> = decomposition
        .coefficient_arrays()
        .map(|arr| arr.iter().map(|c| c * c).sum::<f64>())
        .collect();
    let total: f64 = energies.iter().sum();
    if total == 0.0 {
        return vec![0.0; energies.len()];
    }
    energies.into_iter().map(|e| e / total * 100.0).collect()
}

/// Mean of absolute coefficient values.
pub fn abs_mean(coeffs: &[f64]) -> Result<f64> {
    if coeffs.is_empty() {
        return Err(Error::Argument("coefficient array is empty".into()));
    }
    Ok(coeffs.iter().map(|c| c.abs()).sum::<f64>() / coeffs.len() as f64)
}

/// Population standard deviation (1/N divisor).
pub fn std_dev(coeffs: &[f64]) -> Result<f64> {
    if coeffs.is_empty() {
        return Err(Error::Argument("coefficient array is empty".into()));
    }
    let n = coeffs.len() as f64;
    let mean = coeffs.iter().sum::<f64>() / n;
    let var = coeffs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
    Ok(var.sqrt())
}

/// Shannon entropy in bits of P[k] = |C[k]| / sum |C|, with 0 log 0 = 0.
/// An all-zero array has entropy 0 by convention.
pub fn shannon_entropy(coeffs: &[f64]) -> Result<f64> {
    if coeffs.is_empty() {
        return Err(Error::Argument("coefficient array is empty".into()));
    }
    let total: f64 = coeffs.iter().map(|c| c.abs()).sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let mut h = 0.0;
    for c in coeffs {
        let p = c.abs() / total;
        if p > 0.0 {
            h -= p * p.log2();
        }
    }
    Ok(h)
}

/// Identifies the flow a feature vector came from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowRef {
    pub file: String,
    pub key: String,
    pub segment: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    /// 8J + 8 values in the documented name order.
    pub values: Vec<f64>,
    pub label: Label,
    pub category: Category,
    pub source: FlowRef,
    /// True when the corresponding direction had no packets and its half
    /// of the vector is the zero-signal convention.
    pub fwd_empty: bool,
    pub bwd_empty: bool,
}

/// A labeled feature table: the contract between extraction and modeling.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub levels: usize,
    pub names: Vec<String>,
    pub rows: Vec<FeatureVector>,
}

impl FeatureMatrix {
    pub fn width(&self) -> usize {
        self.names.len()
    }
}

/// Stable feature naming: `{fwd|bwd}_{d1..dJ|a}_{energy|mean|std|entropy}`.
pub fn feature_names(levels: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(8 * levels + 8);
    for dir in ["fwd", "bwd"] {
        for level in 1..=levels + 1 {
            let tag = if level <= levels {
                format!("d{level}")
            } else {
                "a".to_string()
            };
            for metric in ["energy", "mean", "std", "entropy"] {
                names.push(format!("{dir}_{tag}_{metric}"));
            }
        }
    }
    names
}

fn direction_block(sizes: &[u32], levels: usize, family: WaveletFamily) -> Result<Vec<f64>> {
    let signal: Vec<f64> = sizes.iter().map(|&s| f64::from(s)).collect();
    let decomposition = dwt(&signal, levels, family)?;
    let energies = rel_energy(&decomposition);
    let mut values = Vec::with_capacity(4 * (levels + 1));
    for (array, energy) in decomposition.coefficient_arrays().zip(energies) {
        values.push(energy);
        values.push(abs_mean(array)?);
        values.push(std_dev(array)?);
        values.push(shannon_entropy(array)?);
    }
    Ok(values)
}

fn extract_parts(
    fwd_sizes: &[u32],
    bwd_sizes: &[u32],
    label: Label,
    category: Category,
    source: FlowRef,
    levels: usize,
    family: WaveletFamily,
) -> Result<FeatureVector> {
    if fwd_sizes.is_empty() && bwd_sizes.is_empty() {
        return Err(Error::Argument(format!(
            "flow {}#{} has no packets in either direction",
            source.key, source.segment
        )));
    }
    let half = 4 * (levels + 1);
    let mut values = Vec::with_capacity(2 * half);
    let fwd_empty = fwd_sizes.is_empty();
    let bwd_empty = bwd_sizes.is_empty();
    if fwd_empty {
        values.extend(std::iter::repeat(0.0).take(half));
    } else {
        values.extend(direction_block(fwd_sizes, levels, family)?);
    }
    if bwd_empty {
        values.extend(std::iter::repeat(0.0).take(half));
    } else {
        values.extend(direction_block(bwd_sizes, levels, family)?);
    }
    Ok(FeatureVector {
        values,
        label,
        category,
        source,
        fwd_empty,
        bwd_empty,
    })
}

/// Feature vector of one metered flow.
pub fn extract(flow: &Flow, levels: usize, family: WaveletFamily) -> Result<FeatureVector> {
    extract_parts(
        &flow.fwd_sizes,
        &flow.bwd_sizes,
        flow.label,
        flow.category,
        FlowRef {
            file: flow.file.clone(),
            key: flow.key.to_string(),
            segment: flow.segment_index,
        },
        levels,
        family,
    )
}

/// Feature vector of one flow-table row.
pub fn extract_row(row: &FlowRow, levels: usize, family: WaveletFamily) -> Result<FeatureVector> {
    extract_parts(
        &row.fwd_sizes,
        &row.bwd_sizes,
        row.label,
        row.category,
        FlowRef {
            file: row.file.clone(),
            key: row.key.clone(),
            segment: row.segment,
        },
        levels,
        family,
    )
}

pub fn extract_matrix(flows: &[Flow], levels: usize, family: WaveletFamily) -> Result<FeatureMatrix> {
    let rows = flows
        .iter()
        .map(|f| extract(f, levels, family))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureMatrix {
        levels,
        names: feature_names(levels),
        rows,
    })
}

pub fn extract_matrix_from_rows(
    rows: &[FlowRow],
    levels: usize,
    family: WaveletFamily,
) -> Result<FeatureMatrix> {
    let rows = rows
        .iter()
        .map(|r| extract_row(r, levels, family))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureMatrix {
        levels,
        names: feature_names(levels),
        rows,
    })
}

// ---------------------------------------------------------------------------
// Feature table file contract
// ---------------------------------------------------------------------------

pub fn write_feature_csv(matrix: &FeatureMatrix, path: &Path) -> Result<()> {
    let file = tableio::write_table(path, FEATURE_TABLE_SCHEMA)?;
    let mut writer = csv::Writer::from_writer(file);
    let mut header: Vec<&str> = matrix.names.iter().map(String::as_str).collect();
    header.extend(["label", "category", "file", "key", "segment"]);
    writer
        .write_record(&header)
        .map_err(|e| Error::data(path, e.to_string()))?;

    for row in &matrix.rows {
        let mut record: Vec<String> = row.values.iter().map(f64::to_string).collect();
        record.push(row.label.to_string());
        record.push(row.category.to_string());
        record.push(row.source.file.clone());
        record.push(row.source.key.clone());
        record.push(row.source.segment.to_string());
        writer
            .write_record(&record)
            .map_err(|e| Error::data(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_feature_csv(path: &Path) -> Result<FeatureMatrix> {
    let reader = tableio::open_table(path, FEATURE_TABLE_SCHEMA)?;
    let mut csv_reader = csv::Reader::from_reader(reader);
    let headers = csv_reader
        .headers()
        .map_err(|e| Error::data(path, e.to_string()))?
        .clone();

    let total = headers.len();
    if total < 5 + 16 {
        return Err(Error::data(path, "too few columns for a feature table"));
    }
    let width = total - 5;
    if width % 8 != 0 {
        return Err(Error::data(
            path,
            format!("feature column count {width} is not 8J+8"),
        ));
    }
    let levels = (width - 8) / 8;
    let expected = feature_names(levels);
    let found: Vec<&str> = headers.iter().take(width).collect();
    if found != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            expected: format!("feature names for J={levels}"),
            found: "different feature name layout".to_string(),
        });
    }

    let mut rows = Vec::new();
    for record in csv_reader.records() {
        let record = record.map_err(|e| Error::data(path, e.to_string()))?;
        let mut values = Vec::with_capacity(width);
        for i in 0..width {
            let raw = record.get(i).unwrap_or_default();
            values.push(
                raw.parse::<f64>()
                    .map_err(|_| Error::data(path, format!("bad feature value `{raw}`")))?,
            );
        }
        let field = |i: usize| record.get(width + i).unwrap_or_default();
        rows.push(FeatureVector {
            values,
            label: field(0).parse()?,
            category: field(1).parse()?,
            source: FlowRef {
                file: field(2).to_string(),
                key: field(3).to_string(),
                segment: field(4)
                    .parse()
                    .map_err(|_| Error::data(path, format!("bad segment `{}`", field(4))))?,
            },
            fwd_empty: false,
            bwd_empty: false,
        });
    }
    Ok(FeatureMatrix {
        levels,
        names: expected,
        rows,
    })
}
