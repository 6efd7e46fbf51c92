//! File formats and the commands behind the `popescu` binary.
//!
//! Matrices are serialized row-major with complex entries as `[re, im]`
//! pairs. Every command returns an [`Output`]: a JSON document for stdout
//! and the process exit code (0 success, 1 domain or validation failure,
//! 2 I/O or parse failure, 3 numerical-health failure).

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::chain::{clustering_defect, expectation, LocalObservable};
use crate::classify::{classify_chain, classify_chain_with, classify_od, ChainVerdict};
use crate::cpmap::{best_rational, invariant_state, mixed_fixed_points, PeripheralEigenvalue};
use crate::dilation::{build, compression_residual, cuntz_residuals, DEFAULT_GRAM_TOL};
use crate::error::Error;
use crate::modular::{compare_duals, verify_duality};
use crate::numerics::{c, CMatrix};
use crate::popescu::{random_system, relation_residual, PopescuSystem};
use crate::Tolerances;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// A complex matrix in row-major `[re, im]` form.
pub type MatrixJson = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_json(m: &CMatrix) -> MatrixJson {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn matrix_from_json(rows: &MatrixJson) -> Result<CMatrix, CliError> {
    let r = rows.len();
    let cols = rows.first().map_or(0, |row| row.len());
    if rows.iter().any(|row| row.len() != cols) {
        return Err(CliError::Domain(Error::Shape("ragged matrix rows".into())));
    }
    Ok(CMatrix::from_fn(r, cols, |i, j| c(rows[i][j][0], rows[i][j][1])))
}

fn complex_json(z: Complex64) -> Value {
    json!([z.re, z.im])
}

/// Tolerance overrides from the command line.
#[derive(Debug, Clone, Copy, Default)]
pub struct TolOverrides {
    pub validate: Option<f64>,
    pub peripheral: Option<f64>,
    pub spectral_set: Option<f64>,
}

impl TolOverrides {
    fn apply(&self, mut t: Tolerances) -> Tolerances {
        if let Some(v) = self.validate {
            t.validate = v;
        }
        if let Some(v) = self.peripheral {
            t.peripheral = v;
        }
        if let Some(v) = self.spectral_set {
            t.spectral_set = v;
        }
        t
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SystemFile {
    pub d: usize,
    pub dim: usize,
    pub operators: Vec<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SystemFile {
    pub fn from_system(sys: &PopescuSystem, seed: Option<u64>) -> Self {
        Self {
            d: sys.d(),
            dim: sys.n(),
            operators: sys.ops().iter().map(matrix_to_json).collect(),
            tolerances: None,
            seed,
        }
    }

    /// The operator matrices, with shapes checked against `d` and `dim`.
    pub fn matrices(&self) -> Result<Vec<CMatrix>, CliError> {
        if self.operators.len() != self.d {
            return Err(CliError::Domain(Error::Shape(format!(
                "d = {} but {} operators given",
                self.d,
                self.operators.len()
            ))));
        }
        let mats = self.operators.iter().map(matrix_from_json).collect::<Result<Vec<_>, _>>()?;
        if mats.iter().any(|m| m.shape() != (self.dim, self.dim)) {
            return Err(CliError::Domain(Error::Shape(format!(
                "every operator must be {0} x {0}",
                self.dim
            ))));
        }
        Ok(mats)
    }

    pub fn to_system(&self, tol: f64) -> Result<PopescuSystem, CliError> {
        Ok(PopescuSystem::new(self.matrices()?, tol)?)
    }

    pub fn effective_tolerances(&self, overrides: &TolOverrides) -> Tolerances {
        overrides.apply(self.tolerances.unwrap_or_default())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservableSpec {
    #[serde(default = "default_site")]
    pub start_site: i64,
    pub factors: Vec<MatrixJson>,
}

fn default_site() -> i64 {
    1
}

impl ObservableSpec {
    pub fn to_observable(&self) -> Result<LocalObservable, CliError> {
        let factors = self.factors.iter().map(matrix_from_json).collect::<Result<Vec<_>, _>>()?;
        Ok(LocalObservable::new(self.start_site, factors)?)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("cannot parse {what}: {message}")]
    Parse { what: String, message: String },
    #[error(transparent)]
    Domain(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Parse { .. } => EXIT_IO,
            CliError::Domain(e) if e.is_numerical_health() => EXIT_NUMERICAL,
            CliError::Domain(_) => EXIT_DOMAIN,
        }
    }

    /// The error as a JSON document.
    pub fn to_json(&self) -> Value {
        json!({ "error": self.to_string(), "exit_code": self.exit_code() })
    }
}

#[derive(Debug, Clone)]
pub struct Output {
    pub json: Value,
    pub exit_code: i32,
}

impl Output {
    fn ok(json: Value) -> Self {
        Self { json, exit_code: EXIT_OK }
    }
}

impl From<CliError> for Output {
    fn from(e: CliError) -> Self {
        Output { json: e.to_json(), exit_code: e.exit_code() }
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn parse_system_text(text: &[u8], what: &str) -> Result<SystemFile, CliError> {
    serde_json::from_slice(text).map_err(|e| CliError::Parse { what: what.to_string(), message: e.to_string() })
}

/// Reads a system file, returning it with its raw bytes.
pub fn load_system_file(path: &Path) -> Result<(SystemFile, Vec<u8>), CliError> {
    let bytes = read_bytes(path)?;
    let file = parse_system_text(&bytes, &path.display().to_string())?;
    Ok((file, bytes))
}

fn load_system(path: &Path, overrides: &TolOverrides) -> Result<(PopescuSystem, Tolerances), CliError> {
    let (file, _) = load_system_file(path)?;
    let tol = file.effective_tolerances(overrides);
    Ok((file.to_system(tol.validate)?, tol))
}

/// An observable given as a path to a JSON file or as inline JSON.
pub fn load_observable(arg: &str) -> Result<LocalObservable, CliError> {
    let text = if arg.trim_start().starts_with('{') {
        arg.as_bytes().to_vec()
    } else {
        read_bytes(Path::new(arg))?
    };
    let spec: ObservableSpec = serde_json::from_slice(&text)
        .map_err(|e| CliError::Parse { what: "observable".into(), message: e.to_string() })?;
    spec.to_observable()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn cmd_validate(path: &Path, overrides: &TolOverrides) -> Output {
    let run = || -> Result<Output, CliError> {
        let (file, _) = load_system_file(path)?;
        let tol = file.effective_tolerances(overrides);
        let residual = relation_residual(&file.matrices()?)?;
        let valid = residual <= tol.validate;
        Ok(Output {
            json: json!({ "residual": residual, "tolerance": tol.validate, "valid": valid }),
            exit_code: if valid { EXIT_OK } else { EXIT_DOMAIN },
        })
    };
    run().unwrap_or_else(Output::from)
}

fn phase_label(t: Complex64, max_den: u64, tol: f64) -> Option<String> {
    let mut theta = t.arg() / (2.0 * std::f64::consts::PI);
    if theta < 0.0 {
        theta += 1.0;
    }
    let (p, q) = best_rational(theta, max_den);
    ((t.powu(q as u32) - c(1.0, 0.0)).norm() <= tol).then(|| format!("{p}/{q}"))
}

fn peripheral_json(p: &[PeripheralEigenvalue], max_den: u64, tol: f64) -> Value {
    Value::Array(
        p.iter()
            .map(|e| {
                json!({
                    "value": complex_json(e.value),
                    "phase": phase_label(e.value, max_den, tol),
                    "algebraic_multiplicity": e.algebraic,
                    "geometric_multiplicity": e.geometric,
                    "semisimple": e.semisimple,
                })
            })
            .collect(),
    )
}

/// The full classification report. Failures of either analysis are
/// recorded in `notes` and reflected in the exit code.
pub fn cmd_analyze(path: &Path, overrides: &TolOverrides) -> Output {
    let (file, bytes) = match load_system_file(path) {
        Ok(x) => x,
        Err(e) => return e.into(),
    };
    analyze_file(&file, &bytes, overrides)
}

pub fn analyze_file(file: &SystemFile, bytes: &[u8], overrides: &TolOverrides) -> Output {
    let tol = file.effective_tolerances(overrides);
    let mut r = Map::new();
    r.insert("tool".into(), json!("popescu"));
    r.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    r.insert("input_sha256".into(), json!(sha256_hex(bytes)));
    r.insert("tolerances".into(), serde_json::to_value(tol).expect("tolerances serialize"));
    r.insert("d".into(), json!(file.d));
    r.insert("dim".into(), json!(file.dim));
    let mut notes: Vec<String> = Vec::new();
    let mut exit_code = EXIT_OK;
    let sys = match file.to_system(tol.validate) {
        Ok(s) => s,
        Err(e) => {
            notes.push(e.to_string());
            r.insert("notes".into(), json!(notes));
            return Output { json: Value::Object(r), exit_code: e.exit_code() };
        }
    };
    r.insert("validate_residual".into(), json!(sys.validate()));
    let mut fail = |e: Error, notes: &mut Vec<String>| {
        notes.push(e.to_string());
        let code = CliError::Domain(e).exit_code();
        exit_code = exit_code.max(code);
    };

    let od_result = classify_od(&sys, &tol);
    match &od_result {
        Ok(od) => {
            let st = &od.invariant;
            r.insert("ergodic".into(), json!(od.ergodic));
            r.insert("od_state_pure".into(), json!(od.od_state_pure));
            r.insert("fixed_dim".into(), json!(od.fixed_dim));
            r.insert("mixed_fixed_dim".into(), json!(od.mixed_fixed_dim));
            r.insert(
                "invariant_state".into(),
                json!({
                    "rho": matrix_to_json(&st.state.rho),
                    "support_rank": st.state.support_rank,
                    "faithful": st.state.faithful,
                    "min_eigenvalue": st.state.min_eigenvalue,
                    "unique": st.unique,
                    "residual": st.residual,
                    "cesaro_iterations": st.iterations,
                }),
            );
            r.insert("compressed_dim".into(), json!(od.compressed.n()));
            r.insert("compressed_ergodic".into(), json!(od.compressed_ergodic));
            let max_den = (od.compressed.n() * od.compressed.n()) as u64;
            r.insert("peripheral".into(), peripheral_json(&od.peripheral, max_den, tol.spectral_set));
            r.insert("peripheral_informational".into(), json!(od.peripheral_informational));
            r.insert(
                "k".into(),
                match od.k() {
                    Some(k) => json!(k),
                    None => json!("undefined"),
                },
            );
            notes.extend(od.notes.iter().cloned());
        }
        Err(e) => fail(e.clone(), &mut notes),
    }

    let chain_result = match &od_result {
        Ok(od) => classify_chain_with(&sys, &tol, od),
        Err(_) => classify_chain(&sys, &tol),
    };
    match chain_result {
        Ok(ch) => {
            r.insert("chain_hypotheses".into(), serde_json::to_value(ch.hypotheses).expect("flags serialize"));
            let pure = match &ch.verdict {
                ChainVerdict::Pure => json!(true),
                ChainVerdict::NotPure => json!(false),
                ChainVerdict::HypothesesNotMet(_) => json!("hypotheses not met"),
            };
            r.insert("chain_pure".into(), pure);
            if let ChainVerdict::HypothesesNotMet(failing) = &ch.verdict {
                r.insert("chain_failing_hypotheses".into(), json!(failing));
            }
            r.insert("chain_factor".into(), json!(ch.chain_factor));
            r.insert("chain_dim".into(), json!(ch.system.n()));
            r.insert("algebra_dim".into(), json!(ch.algebra_dim));
            r.insert("commutant_dim".into(), json!(ch.commutant_dim));
            let max_den = (ch.system.n() * ch.system.n()) as u64;
            r.insert(
                "chain_peripheral".into(),
                peripheral_json(&ch.peripheral_on_m, max_den, tol.spectral_set),
            );
            r.insert("clustering_tail".into(), json!(ch.clustering_tail));
            notes.extend(ch.notes.iter().cloned());
        }
        Err(e) => fail(e, &mut notes),
    }
    r.insert("notes".into(), json!(notes));
    Output { json: Value::Object(r), exit_code }
}

pub fn cmd_chain_eval(path: &Path, observable: &str, overrides: &TolOverrides) -> Output {
    let run = || -> Result<Output, CliError> {
        let (sys, tol) = load_system(path, overrides)?;
        let obs = load_observable(observable)?;
        let st = invariant_state(&sys, tol.support)?;
        let v = expectation(&sys, &st.state, &obs, 1e3 * tol.support.max(1e-12))?;
        Ok(Output::ok(json!({
            "value": complex_json(v),
            "start_site": obs.start_site,
            "sites": obs.len(),
        })))
    };
    run().unwrap_or_else(Output::from)
}

pub fn cmd_cluster(
    path: &Path,
    x: &str,
    y: &str,
    n_max: usize,
    decay_tol: f64,
    overrides: &TolOverrides,
) -> Output {
    let run = || -> Result<Output, CliError> {
        let (sys, tol) = load_system(path, overrides)?;
        let (x, y) = (load_observable(x)?, load_observable(y)?);
        let st = invariant_state(&sys, tol.support)?;
        let cd = clustering_defect(&sys, &st.state, &x, &y, n_max, decay_tol, 1e3 * tol.support.max(1e-12))?;
        Ok(Output::ok(json!({
            "n_max": n_max,
            "decay_tol": decay_tol,
            "defects": cd.defects,
            "decays": cd.decays(),
            "decayed_from": cd.decayed_from,
            "verdict": if cd.decays() { "decaying" } else { "non-clustering" },
        })))
    };
    run().unwrap_or_else(Output::from)
}

pub fn cmd_dilate(path: &Path, level: usize, overrides: &TolOverrides) -> Output {
    let run = || -> Result<Output, CliError> {
        let (sys, _) = load_system(path, overrides)?;
        let dil = build(&sys, level, DEFAULT_GRAM_TOL)?;
        let r = cuntz_residuals(&dil);
        Ok(Output::ok(json!({
            "level": level,
            "words": dil.words.len(),
            "quotient_dim": dil.quotient_dim(),
            "isometry_residual": r.isometry_residual,
            "completeness_residual": r.completeness_residual,
            "compression_residual": compression_residual(&dil, &sys),
        })))
    };
    run().unwrap_or_else(Output::from)
}

pub fn cmd_dual(path: &Path, overrides: &TolOverrides) -> Output {
    let run = || -> Result<Output, CliError> {
        let (sys, tol) = load_system(path, overrides)?;
        let st = invariant_state(&sys, tol.support)?;
        let state_tol = 1e3 * tol.support.max(1e-12);
        let rep = verify_duality(&sys, &st.state, state_tol)?;
        let cmp = compare_duals(&sys, &st.state, &tol)?;
        let values = |p: &[PeripheralEigenvalue]| -> Vec<Value> { p.iter().map(|e| complex_json(e.value)).collect() };
        let mut out = serde_json::to_value(rep).expect("report serializes");
        let obj = out.as_object_mut().expect("object");
        obj.insert("ergodic_match".into(), json!(cmp.ergodic_match));
        obj.insert("psp_match".into(), json!(cmp.psp_match));
        obj.insert("fixed_dim".into(), json!(cmp.fixed_dim));
        obj.insert("dual_fixed_dim".into(), json!(cmp.dual_fixed_dim));
        obj.insert("peripheral".into(), json!(values(&cmp.peripheral)));
        obj.insert("dual_peripheral".into(), json!(values(&cmp.dual_peripheral)));
        obj.insert(
            "dual_parameters".into(),
            json!(cmp_params(&sys, &st.state, state_tol)?),
        );
        Ok(Output::ok(out))
    };
    run().unwrap_or_else(Output::from)
}

fn cmp_params(sys: &PopescuSystem, st: &crate::cpmap::DensityState, tol: f64) -> Result<Vec<MatrixJson>, CliError> {
    let dual = crate::modular::dual_system(sys, st, tol)?;
    Ok(dual.params.iter().map(matrix_to_json).collect())
}

pub fn cmd_intertwine(path_w: &Path, path_v: &Path, overrides: &TolOverrides) -> Output {
    let run = || -> Result<Output, CliError> {
        let (w, tol) = load_system(path_w, overrides)?;
        let (v, _) = load_system(path_v, overrides)?;
        let sub = mixed_fixed_points(&w, &v, tol.kernel)?;
        Ok(Output::ok(json!({
            "dimension": sub.dim(),
            "shape": [w.n(), v.n()],
            "basis": sub.basis().iter().map(matrix_to_json).collect::<Vec<_>>(),
        })))
    };
    run().unwrap_or_else(Output::from)
}

pub fn cmd_random(d: usize, n: usize, seed: u64) -> Output {
    if d < 2 || n < 1 {
        return CliError::Domain(Error::Shape("random systems need d >= 2 and n >= 1".into())).into();
    }
    let sys = random_system(d, n, seed);
    Output::ok(serde_json::to_value(SystemFile::from_system(&sys, Some(seed))).expect("system serializes"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::popescu::named::*;

    #[test]
    fn matrix_json_round_trip() {
        let m = CMatrix::from_fn(2, 3, |i, j| c(i as f64 + 0.1, -(j as f64) / 3.0));
        let back = matrix_from_json(&matrix_to_json(&m)).unwrap();
        assert_eq!(m, back);
        assert_eq!(matrix_to_json(&m)[0].len(), 3);
    }

    #[test]
    fn system_file_round_trip_is_exact() {
        let sys = random_system(3, 2, 9);
        let file = SystemFile::from_system(&sys, Some(9));
        let text = serde_json::to_string(&file).unwrap();
        let back = parse_system_text(text.as_bytes(), "test").unwrap();
        assert_eq!(back, file);
        assert_eq!(back.matrices().unwrap(), sys.ops().to_vec());
    }

    #[test]
    fn shape_errors_are_domain_failures() {
        let mut file = SystemFile::from_system(&swap(), None);
        file.d = 3;
        assert_eq!(file.matrices().unwrap_err().exit_code(), EXIT_DOMAIN);
        let bad = parse_system_text(b"{not json", "x").unwrap_err();
        assert_eq!(bad.exit_code(), EXIT_IO);
    }

    #[test]
    fn analyze_swap_report() {
        let file = SystemFile::from_system(&swap(), None);
        let out = analyze_file(&file, b"swap", &TolOverrides::default());
        assert_eq!(out.exit_code, 0);
        assert_eq!(out.json["ergodic"], json!(true));
        assert_eq!(out.json["k"], json!(2));
        assert_eq!(out.json["chain_pure"], json!(false));
        assert_eq!(out.json["peripheral"][1]["phase"], json!("1/2"));
    }

    #[test]
    fn analyze_arveson_report() {
        let file = SystemFile::from_system(&arveson(), None);
        let out = analyze_file(&file, b"a", &TolOverrides::default());
        assert_eq!(out.json["ergodic"], json!(false));
        assert_eq!(out.json["k"], json!("undefined"));
    }

    #[test]
    fn overrides_take_precedence() {
        let mut file = SystemFile::from_system(&swap(), None);
        file.tolerances = Some(Tolerances { validate: 1e-3, ..Tolerances::default() });
        let o = TolOverrides { validate: Some(1e-6), ..TolOverrides::default() };
        assert_eq!(file.effective_tolerances(&o).validate, 1e-6);
        assert_eq!(file.effective_tolerances(&TolOverrides::default()).validate, 1e-3);
    }

    #[test]
    fn phase_labels() {
        assert_eq!(phase_label(c(-1.0, 0.0), 4, 1e-8).as_deref(), Some("1/2"));
        assert_eq!(phase_label(c(1.0, 0.0), 4, 1e-8).as_deref(), Some("0/1"));
        let irr = Complex64::from_polar(1.0, 1.0);
        assert_eq!(phase_label(irr, 4, 1e-8), None);
    }
}
