//! JSON documents for models and state-transition-matrix lists.
//!
//! A model document looks like
//!
//! ```json
//! {
//!   "subsystems": [ { "A_TT": [[0.5]], "A_TS": [[1.0]], "A_ST": [[1.0]], "A_SS": [[0.0]] } ],
//!   "phi": [[1.0]],
//!   "strict_assumption3": false
//! }
//! ```
//!
//! Blocks are row-major nested arrays. Missing blocks are zero. A block with
//! no rows is written `[]`, so its column count comes from the other blocks
//! or from an optional `dims` object. Writers emit 17 significant digits, so
//! reading back a written document reproduces every entry exactly.

use serde::{Deserialize, Serialize};

use crate::error::{NetError, Result};
use crate::linalg::Mat;
use crate::model::{NetworkedSystem, Signal, SubsystemDims, SubsystemRealization};
use crate::serde_util::serialize_matrix;

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubsystemIn {
    dims: Option<SubsystemDims>,
    #[serde(rename = "A_TT")]
    a_tt: Option<Rows>,
    #[serde(rename = "A_TS")]
    a_ts: Option<Rows>,
    #[serde(rename = "B_T")]
    b_t: Option<Rows>,
    #[serde(rename = "A_ST")]
    a_st: Option<Rows>,
    #[serde(rename = "A_SS")]
    a_ss: Option<Rows>,
    #[serde(rename = "B_S")]
    b_s: Option<Rows>,
    #[serde(rename = "C_T")]
    c_t: Option<Rows>,
    #[serde(rename = "C_S")]
    c_s: Option<Rows>,
    #[serde(rename = "D")]
    d: Option<Rows>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelIn {
    subsystems: Vec<SubsystemIn>,
    phi: Option<Rows>,
    strict_assumption3: Option<bool>,
}

/// Parse with the JSON path and position of the first problem in the error.
fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let msg = inner.to_string();
        let suffix = format!(" at line {} column {}", inner.line(), inner.column());
        NetError::Document(format!(
            "line {} column {} at `{}`: {}",
            inner.line(),
            inner.column(),
            path,
            msg.strip_suffix(&suffix).unwrap_or(&msg)
        ))
    })
}

fn to_matrix(rows: &Rows, cols_hint: usize, field: &str) -> Result<Mat> {
    if rows.is_empty() {
        return Ok(Mat::zeros(0, cols_hint));
    }
    let c = rows[0].len();
    for (k, r) in rows.iter().enumerate() {
        if r.len() != c {
            return Err(NetError::Document(format!(
                "{field}: row {} has {} entries, row 1 has {c}",
                k + 1,
                r.len()
            )));
        }
    }
    Ok(Mat::from_fn(rows.len(), c, |i, j| rows[i][j]))
}

const BLOCKS: [(&str, Signal, Signal); 9] = [
    ("A_TT", Signal::X, Signal::X),
    ("A_TS", Signal::X, Signal::V),
    ("B_T", Signal::X, Signal::U),
    ("A_ST", Signal::Z, Signal::X),
    ("A_SS", Signal::Z, Signal::V),
    ("B_S", Signal::Z, Signal::U),
    ("C_T", Signal::Y, Signal::X),
    ("C_S", Signal::Y, Signal::V),
    ("D", Signal::Y, Signal::U),
];

fn idx(s: Signal) -> usize {
    match s {
        Signal::X => 0,
        Signal::V => 1,
        Signal::U => 2,
        Signal::Z => 3,
        Signal::Y => 4,
    }
}

fn subsystem_from_doc(i: usize, s: &SubsystemIn) -> Result<SubsystemRealization> {
    let given = [&s.a_tt, &s.a_ts, &s.b_t, &s.a_st, &s.a_ss, &s.b_s, &s.c_t, &s.c_s, &s.d];
    let mut dims: [Option<usize>; 5] = [None; 5];
    if let Some(d) = s.dims {
        for sig in [Signal::X, Signal::V, Signal::U, Signal::Z, Signal::Y] {
            dims[idx(sig)] = Some(d.get(sig));
        }
    }
    for ((_, rs, cs), m) in BLOCKS.iter().zip(given) {
        if let Some(rows) = m {
            dims[idx(*rs)].get_or_insert(rows.len());
            if let Some(first) = rows.first() {
                dims[idx(*cs)].get_or_insert(first.len());
            }
        }
    }
    let dim = |sig| dims[idx(sig)].unwrap_or(0);
    let mut mats = Vec::with_capacity(9);
    for ((name, rs, cs), m) in BLOCKS.iter().zip(given) {
        let field = format!("subsystems[{i}].{name}");
        mats.push(match m {
            Some(rows) => to_matrix(rows, dim(*cs), &field)?,
            None => Mat::zeros(dim(*rs), dim(*cs)),
        });
    }
    let mut it = mats.into_iter();
    let mut next = || it.next().expect("nine blocks");
    Ok(SubsystemRealization {
        a_tt: next(),
        a_ts: next(),
        b_t: next(),
        a_st: next(),
        a_ss: next(),
        b_s: next(),
        c_t: next(),
        c_s: next(),
        d: next(),
    })
}

/// Parse a model document. Structural problems (bad JSON, ragged rows,
/// unknown fields) are errors; inconsistent block shapes are left for
/// [`crate::model::validate`] to report.
pub fn read_model(text: &str) -> Result<NetworkedSystem> {
    let doc: ModelIn = parse(text)?;
    let subs = doc
        .subsystems
        .iter()
        .enumerate()
        .map(|(i, s)| subsystem_from_doc(i, s))
        .collect::<Result<Vec<_>>>()?;
    let m_v: usize = subs.iter().map(|s| s.a_ss.ncols()).sum();
    let m_z: usize = subs.iter().map(|s| s.a_ss.nrows()).sum();
    let phi = match &doc.phi {
        Some(rows) => to_matrix(rows, m_z, "phi")?,
        None => Mat::zeros(m_v, m_z),
    };
    Ok(NetworkedSystem::new(subs, phi, doc.strict_assumption3.unwrap_or(false)))
}

#[derive(Serialize)]
struct SubsystemOut<'a> {
    dims: SubsystemDims,
    #[serde(rename = "A_TT", serialize_with = "serialize_matrix")]
    a_tt: &'a Mat,
    #[serde(rename = "A_TS", serialize_with = "serialize_matrix")]
    a_ts: &'a Mat,
    #[serde(rename = "B_T", serialize_with = "serialize_matrix")]
    b_t: &'a Mat,
    #[serde(rename = "A_ST", serialize_with = "serialize_matrix")]
    a_st: &'a Mat,
    #[serde(rename = "A_SS", serialize_with = "serialize_matrix")]
    a_ss: &'a Mat,
    #[serde(rename = "B_S", serialize_with = "serialize_matrix")]
    b_s: &'a Mat,
    #[serde(rename = "C_T", serialize_with = "serialize_matrix")]
    c_t: &'a Mat,
    #[serde(rename = "C_S", serialize_with = "serialize_matrix")]
    c_s: &'a Mat,
    #[serde(rename = "D", serialize_with = "serialize_matrix")]
    d: &'a Mat,
}

#[derive(Serialize)]
struct ModelOut<'a> {
    subsystems: Vec<SubsystemOut<'a>>,
    #[serde(serialize_with = "serialize_matrix")]
    phi: &'a Mat,
    strict_assumption3: bool,
}

/// Serialize a model with 17 significant digits per entry.
pub fn write_model(system: &NetworkedSystem) -> Result<String> {
    let doc = ModelOut {
        subsystems: system
            .subsystems()
            .iter()
            .map(|s| SubsystemOut {
                dims: s.dims(),
                a_tt: &s.a_tt,
                a_ts: &s.a_ts,
                b_t: &s.b_t,
                a_st: &s.a_st,
                a_ss: &s.a_ss,
                b_s: &s.b_s,
                c_t: &s.c_t,
                c_s: &s.c_s,
                d: &s.d,
            })
            .collect(),
        phi: system.phi(),
        strict_assumption3: system.interconnection().strict_assumption3,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// A list of state-transition matrices with optional per-subsystem
/// budgets and internal-signal counts for synthesis.
#[derive(Debug, Clone, PartialEq)]
pub struct StmDocument {
    pub stms: Vec<Mat>,
    pub budgets: Option<Vec<usize>>,
    pub internal: Option<Vec<usize>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StmIn {
    stms: Vec<Rows>,
    budgets: Option<Vec<usize>>,
    internal: Option<Vec<usize>>,
}

/// Accepts `{"stms": [...], "budgets": [...], "internal": [...]}`, a bare
/// list of matrices, or a model document (its `A_TT` blocks are used).
pub fn read_stms(text: &str) -> Result<StmDocument> {
    let value: serde_json::Value = parse(text)?;
    let (rows, budgets, internal) = match &value {
        serde_json::Value::Array(_) => (parse::<Vec<Rows>>(text)?, None, None),
        serde_json::Value::Object(o) if o.contains_key("subsystems") => {
            let sys = read_model(text)?;
            let stms = sys.subsystems().iter().map(|s| s.a_tt.clone()).collect();
            return Ok(StmDocument { stms, budgets: None, internal: None });
        }
        _ => {
            let d: StmIn = parse(text)?;
            (d.stms, d.budgets, d.internal)
        }
    };
    let stms = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let m = to_matrix(r, 0, &format!("stms[{i}]"))?;
            if !m.is_square() {
                return Err(NetError::Document(format!(
                    "stms[{i}] is {}x{}, expected square",
                    m.nrows(),
                    m.ncols()
                )));
            }
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    for (name, v) in [("budgets", &budgets), ("internal", &internal)] {
        if let Some(v) = v {
            if v.len() != stms.len() {
                return Err(NetError::Document(format!(
                    "{name} has {} entries for {} matrices",
                    v.len(),
                    stms.len()
                )));
            }
        }
    }
    Ok(StmDocument { stms, budgets, internal })
}

#[derive(Serialize)]
struct StmOut<'a> {
    #[serde(serialize_with = "serialize_matrices")]
    stms: &'a [Mat],
}

fn serialize_matrices<S: serde::Serializer>(ms: &&[Mat], s: S) -> std::result::Result<S::Ok, S::Error> {
    let text = format!(
        "[{}]",
        ms.iter().map(crate::serde_util::matrix_json).collect::<Vec<_>>().join(",")
    );
    serde_json::value::RawValue::from_string(text)
        .map_err(serde::ser::Error::custom)?
        .serialize(s)
}

pub fn write_stms(stms: &[Mat]) -> Result<String> {
    Ok(serde_json::to_string_pretty(&StmOut { stms })?)
}
