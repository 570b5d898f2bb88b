//! File formats.
//!
//! * Likert data: long-format CSV with header `subject,item,time,response`,
//!   1-based integer indices, one row per cell, LF line endings.
//! * Parameters and cut points: JSON `{sigma, tau, cuts, num_categories}`.
//! * Estimates: JSON on the squared reporting scale (see [`EstimateReport`]).
//! * Chain traces: CSV `iteration,parameter,value`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CutPointSet, LikertDataset, ModelParams};
use crate::reconstruction::FitResult;
use crate::stem::StemChain;

pub const DATA_HEADER: [&str; 4] = ["subject", "item", "time", "response"];
pub const TRACE_HEADER: [&str; 3] = ["iteration", "parameter", "value"];

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn parse_field<T: std::str::FromStr>(record: &csv::StringRecord, idx: usize, name: &str) -> Result<T> {
    let line = record.position().map_or(0, |p| p.line());
    let raw = record.get(idx).ok_or_else(|| Error::Parse {
        line,
        message: format!("missing field `{name}`"),
    })?;
    raw.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("field `{name}` has invalid value {raw:?}"),
    })
}

fn check_header(reader: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let header = reader.headers()?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`, found `{}`", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

/// Reads a complete `n x J x T` panel. Subjects are ordered by identifier;
/// items and occasions must cover `1..=J` and `1..=T` for every subject.
/// The category count defaults to the largest observed response.
pub fn read_likert_csv<R: Read>(reader: R, num_categories: Option<usize>) -> Result<LikertDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    check_header(&mut rdr, &DATA_HEADER)?;
    let mut cells: BTreeMap<i64, BTreeMap<(usize, usize), u16>> = BTreeMap::new();
    let (mut items, mut times, mut top) = (0usize, 0usize, 0u16);
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let subject: i64 = parse_field(&record, 0, "subject")?;
        let item: usize = parse_field(&record, 1, "item")?;
        let time: usize = parse_field(&record, 2, "time")?;
        let response: u16 = parse_field(&record, 3, "response")?;
        if item == 0 || time == 0 || response == 0 {
            return Err(Error::Parse {
                line,
                message: "item, time and response are 1-based".into(),
            });
        }
        if cells.entry(subject).or_default().insert((item, time), response).is_some() {
            return Err(Error::Parse {
                line,
                message: format!("duplicate cell (subject {subject}, item {item}, time {time})"),
            });
        }
        items = items.max(item);
        times = times.max(time);
        top = top.max(response);
    }
    if cells.is_empty() {
        return Err(Error::InvalidData("no data rows".into()));
    }
    let mut missing = Vec::new();
    let mut responses = Vec::with_capacity(cells.len() * items * times);
    for (&subject, row) in &cells {
        for t in 1..=times {
            for j in 1..=items {
                match row.get(&(j, t)) {
                    Some(&y) => responses.push(y),
                    None => missing.push((subject, j, t)),
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompletePanel(missing));
    }
    let categories = num_categories.unwrap_or(top as usize);
    LikertDataset::new(cells.len(), items, times, categories, responses)
}

pub fn write_likert_csv<W: Write>(writer: W, data: &LikertDataset) -> Result<()> {
    let mut w = csv_writer(writer);
    w.write_record(DATA_HEADER)?;
    for i in 0..data.subjects() {
        for j in 0..data.items() {
            for t in 0..data.times() {
                w.write_record(&[
                    (i + 1).to_string(),
                    (j + 1).to_string(),
                    (t + 1).to_string(),
                    data.response(i, j, t).to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Parameters plus cut points, as stored in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub sigma: Vec<f64>,
    pub tau: Vec<f64>,
    pub cuts: Vec<Vec<f64>>,
    pub num_categories: usize,
}

impl ModelSpec {
    pub fn from_parts(params: &ModelParams, cuts: &CutPointSet) -> Self {
        Self {
            sigma: params.sigma().to_vec(),
            tau: params.tau().to_vec(),
            cuts: cuts.rows().to_vec(),
            num_categories: cuts.num_categories(),
        }
    }

    pub fn to_parts(&self) -> Result<(ModelParams, CutPointSet)> {
        let params = ModelParams::new(self.sigma.clone(), self.tau.clone())?;
        let cuts = CutPointSet::new(self.cuts.clone(), self.num_categories)?;
        if cuts.items() != params.items() {
            return Err(Error::Dimension(format!(
                "{} items in sigma/tau but {} rows of cut points",
                params.items(),
                cuts.items()
            )));
        }
        Ok((params, cuts))
    }
}

/// Estimates on the squared reporting scale: `sigma_sq = sigma^2`,
/// `tau_sq_signed = sign(tau) * tau^2`, `gamma_sq = 1 - sigma^2 - tau^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: String,
    pub sigma_sq: Vec<f64>,
    pub tau_sq_signed: Vec<f64>,
    pub gamma_sq: Vec<f64>,
    /// Frobenius distance `H` for correlation reconstruction; average
    /// completed-data log-likelihood per subject at the final estimates for
    /// stochastic EM.
    pub objective: f64,
    pub converged: bool,
    pub sigma: Vec<f64>,
    pub tau: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cuts: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_categories: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl EstimateReport {
    fn from_params(method: &str, params: &ModelParams, objective: f64, converged: bool) -> Self {
        Self {
            method: method.into(),
            sigma_sq: params.sigma().iter().map(|s| s * s).collect(),
            tau_sq_signed: params.tau().iter().map(|t| t * t.abs()).collect(),
            gamma_sq: params.gamma_sq(),
            objective,
            converged,
            sigma: params.sigma().to_vec(),
            tau: params.tau().to_vec(),
            cuts: None,
            num_categories: None,
            warnings: Vec::new(),
        }
    }

    pub fn from_fit(fit: &FitResult, cuts: Option<&CutPointSet>) -> Self {
        let mut r = Self::from_params("cr", &fit.params, fit.objective, fit.converged);
        if let Some(c) = cuts {
            r.cuts = Some(c.rows().to_vec());
            r.num_categories = Some(c.num_categories());
        }
        r
    }

    pub fn from_chain(chain: &StemChain) -> Self {
        let mut r = Self::from_params("stem", &chain.final_params, chain.mean_loglik, true);
        r.cuts = Some(chain.final_cuts.rows().to_vec());
        r.num_categories = Some(chain.final_cuts.num_categories());
        r.warnings = chain.diagnostics.clone();
        r
    }
}

pub fn write_trace_csv<W: Write>(writer: W, chain: &StemChain) -> Result<()> {
    let mut w = csv_writer(writer);
    w.write_record(TRACE_HEADER)?;
    for (iteration, name, value) in chain.trace_rows() {
        w.write_record(&[iteration.to_string(), name, format!("{value:?}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Parameter traces keyed by name, in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub names: Vec<String>,
    pub series: Vec<Vec<f64>>,
}

pub fn read_trace_csv<R: Read>(reader: R) -> Result<Trace> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    check_header(&mut rdr, &TRACE_HEADER)?;
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut raw: Vec<Vec<(u64, f64)>> = Vec::new();
    let mut names = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let iteration: u64 = parse_field(&record, 0, "iteration")?;
        let name: String = parse_field(&record, 1, "parameter")?;
        let value: f64 = parse_field(&record, 2, "value")?;
        let slot = *index.entry(name.clone()).or_insert_with(|| {
            names.push(name);
            raw.push(Vec::new());
            raw.len() - 1
        });
        raw[slot].push((iteration, value));
    }
    let series = raw
        .into_iter()
        .map(|mut s| {
            s.sort_by_key(|(it, _)| *it);
            s.into_iter().map(|(_, v)| v).collect()
        })
        .collect();
    Ok(Trace { names, series })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{reference_configuration, simulate};

    #[test]
    fn csv_round_trip() {
        let (p, c) = reference_configuration();
        let (_, data) = simulate(&p, &c, 7, 2, 4).unwrap();
        let mut buf = Vec::new();
        write_likert_csv(&mut buf, &data).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("subject,item,time,response\n1,1,1,"));
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().count(), 1 + 7 * 5 * 2);
        let back = read_likert_csv(buf.as_slice(), Some(5)).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn incomplete_panel_lists_missing_cells() {
        let text = "subject,item,time,response\n1,1,1,2\n1,2,1,3\n1,1,2,1\n1,2,2,2\n2,1,1,1\n2,2,1,1\n2,1,2,3\n";
        match read_likert_csv(text.as_bytes(), None) {
            Err(Error::IncompletePanel(missing)) => assert_eq!(missing, vec![(2, 2, 2)]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_rows_are_parse_errors() {
        let bad = [
            "subject,item,time,response\n1,1,1,x\n",
            "subject,item,time\n1,1,1\n",
            "subject,item,time,response\n1,0,1,2\n",
            "subject,item,time,response\n1,1,1,2\n1,1,1,3\n",
        ];
        for text in bad {
            let err = read_likert_csv(text.as_bytes(), None).unwrap_err();
            assert!(matches!(err, Error::Parse { .. } | Error::Csv(_)), "{text:?}: {err}");
            assert!(err.is_input_error());
        }
    }

    #[test]
    fn response_above_category_count_rejected() {
        let text = "subject,item,time,response\n1,1,1,4\n1,2,1,1\n1,1,2,1\n1,2,2,1\n";
        assert!(read_likert_csv(text.as_bytes(), Some(3)).is_err());
        assert_eq!(read_likert_csv(text.as_bytes(), None).unwrap().num_categories(), 4);
    }

    #[test]
    fn model_spec_json() {
        let (p, c) = reference_configuration();
        let spec = ModelSpec::from_parts(&p, &c);
        let json = serde_json::to_string(&spec).unwrap();
        for field in ["\"sigma\"", "\"tau\"", "\"cuts\"", "\"num_categories\""] {
            assert!(json.contains(field));
        }
        let back: ModelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_parts().unwrap(), (p, c));
    }

    #[test]
    fn squared_scale_keeps_tau_sign() {
        let params = ModelParams::new(vec![0.8, 0.5], vec![-0.3, 0.4]).unwrap();
        let fit = FitResult {
            gamma_sq: params.gamma_sq(),
            params,
            objective: 0.1,
            converged: true,
        };
        let r = EstimateReport::from_fit(&fit, None);
        assert!((r.tau_sq_signed[0] + 0.09).abs() < 1e-15);
        assert!((r.tau_sq_signed[1] - 0.16).abs() < 1e-15);
        assert!((r.sigma_sq[0] - 0.64).abs() < 1e-15);
        let json = serde_json::to_value(&r).unwrap();
        for field in ["sigma_sq", "tau_sq_signed", "gamma_sq", "objective"] {
            assert!(json.get(field).is_some());
        }
    }
}
