//! Moore-Penrose pseudoinverses, generalized condition numbers, and the
//! full-grid versus coarse-grid conditioning comparison.

mod dense;
mod svd;

pub use dense::DenseMatrix;
pub use svd::{svd, Svd};

use std::cell::OnceCell;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::exec;
use crate::geometry::ScanGeometry;
use crate::operators::{build_system_matrix, DownSampler};

/// Default singular-value cutoff relative to the largest singular value.
pub const DEFAULT_SV_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormKind {
    One,
    Two,
    Inf,
}

impl NormKind {
    pub const ALL: [NormKind; 3] = [NormKind::One, NormKind::Two, NormKind::Inf];
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormKind::One => "1",
            NormKind::Two => "2",
            NormKind::Inf => "inf",
        })
    }
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "one" => Ok(NormKind::One),
            "2" | "two" => Ok(NormKind::Two),
            "inf" | "infinity" => Ok(NormKind::Inf),
            other => Err(Error::invalid(format!("unknown norm {other:?}, expected 1, 2 or inf"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionReport {
    pub norm_kind: NormKind,
    pub matrix_norm: f64,
    pub pinv_norm: f64,
    pub cond: f64,
    pub rank: usize,
    pub sv_threshold: f64,
}

/// SVD of one matrix plus its lazily formed pseudoinverse, so several norms
/// can be reported from a single decomposition.
pub struct ConditionAnalysis {
    matrix: DenseMatrix,
    svd: Svd,
    threshold: f64,
    rank: usize,
    pinv: OnceCell<DenseMatrix>,
}

impl ConditionAnalysis {
    pub fn new(m: DenseMatrix, tol: f64) -> Result<Self> {
        if m.rows() == 0 || m.cols() == 0 || m.is_zero() {
            return Err(Error::DegenerateInput("matrix is zero".into()));
        }
        if !(tol >= 0.0) {
            return Err(Error::invalid(format!("singular-value tolerance must be >= 0, got {tol}")));
        }
        let svd = svd(&m);
        let threshold = tol * svd.singular_values[0];
        let rank = svd.singular_values.iter().take_while(|&&s| s > threshold).count();
        Ok(Self { matrix: m, svd, threshold, rank, pinv: OnceCell::new() })
    }

    pub fn svd(&self) -> &Svd {
        &self.svd
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn pinv(&self) -> &DenseMatrix {
        self.pinv.get_or_init(|| pinv_from_svd(&self.svd, self.rank))
    }

    pub fn report(&self, norm_kind: NormKind) -> ConditionReport {
        let (matrix_norm, pinv_norm) = match norm_kind {
            NormKind::Two => {
                let s = &self.svd.singular_values;
                (s[0], 1.0 / s[self.rank - 1])
            }
            NormKind::One => (self.matrix.norm_one(), self.pinv().norm_one()),
            NormKind::Inf => (self.matrix.norm_inf(), self.pinv().norm_inf()),
        };
        ConditionReport {
            norm_kind,
            matrix_norm,
            pinv_norm,
            cond: matrix_norm * pinv_norm,
            rank: self.rank,
            sv_threshold: self.threshold,
        }
    }
}

/// `V_r diag(1/s_r) U_r^T` over the leading `rank` singular triplets.
fn pinv_from_svd(s: &Svd, rank: usize) -> DenseMatrix {
    let m = s.u.rows();
    let n = s.v.rows();
    // row-major copies of the scaled factors so every output entry is one contiguous dot
    let vs: Vec<f64> = (0..n)
        .flat_map(|i| (0..rank).map(move |j| (i, j)))
        .map(|(i, j)| s.v.get(i, j) / s.singular_values[j])
        .collect();
    let ur: Vec<f64> = (0..m).flat_map(|k| (0..rank).map(move |j| s.u.get(k, j))).collect();
    let mut out = vec![0.0; n * m];
    if m > 0 && rank > 0 {
        exec::for_each_chunk_mut(&mut out, m, |i, row| {
            let a = &vs[i * rank..(i + 1) * rank];
            for (k, o) in row.iter_mut().enumerate() {
                let b = &ur[k * rank..(k + 1) * rank];
                *o = a.iter().zip(b).map(|(x, y)| x * y).sum();
            }
        });
    }
    DenseMatrix::new(n, m, out).expect("finite pseudoinverse")
}

/// Moore-Penrose pseudoinverse; singular values at or below `tol * s_max` count as zero.
pub fn pseudoinverse(m: &DenseMatrix, tol: f64) -> Result<DenseMatrix> {
    let a = ConditionAnalysis::new(m.clone(), tol)?;
    Ok(a.pinv().clone())
}

/// Generalized condition number `||m|| * ||m^+||`.
pub fn condition_number(m: &DenseMatrix, norm_kind: NormKind, tol: f64) -> Result<ConditionReport> {
    Ok(ConditionAnalysis::new(m.clone(), tol)?.report(norm_kind))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem1Check {
    pub full: ConditionReport,
    pub low: ConditionReport,
    pub cond_full: f64,
    pub cond_low: f64,
    pub holds: bool,
}

/// Relative slack allowed in `cond_low <= cond_full`.
pub const ORDERING_SLACK: f64 = 1e-6;

impl Theorem1Check {
    fn new(full: ConditionReport, low: ConditionReport) -> Self {
        Self {
            full,
            low,
            cond_full: full.cond,
            cond_low: low.cond,
            holds: low.cond <= full.cond * (1.0 + ORDERING_SLACK),
        }
    }
}

fn analysis_for(geom: &ScanGeometry) -> Result<ConditionAnalysis> {
    let m = build_system_matrix(geom)?.to_dense();
    ConditionAnalysis::new(m, DEFAULT_SV_TOL)
}

/// Compare the condition number of the system matrix on the full grid with the
/// one on the grid coarsened by `tau` (same views and bins).
pub fn verify_theorem1(geom: &ScanGeometry, tau: usize, norm_kind: NormKind) -> Result<Theorem1Check> {
    DownSampler::new(tau, geom.n())?;
    let full = analysis_for(geom)?;
    let low_report = if tau == 1 {
        full.report(norm_kind)
    } else {
        analysis_for(&geom.coarsened(tau)?)?.report(norm_kind)
    };
    Ok(Theorem1Check::new(full.report(norm_kind), low_report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub coverage_deg: f64,
    pub tau: usize,
    pub norm: NormKind,
    pub cond_full: f64,
    pub cond_low: f64,
    pub holds: bool,
}

/// [`verify_theorem1`] over a coverage x factor grid on the default geometry
/// of side `n`. Full-grid decompositions are shared across factors and norms.
pub fn condition_sweep(n: usize, coverages: &[f64], taus: &[usize], norms: &[NormKind]) -> Result<Vec<SweepRow>> {
    for &t in taus {
        DownSampler::new(t, n)?;
    }
    let per_coverage = exec::map_indexed(coverages.len(), |ci| -> Result<Vec<SweepRow>> {
        let cov = coverages[ci];
        let geom = ScanGeometry::default_for(n, cov)?;
        let full = analysis_for(&geom)?;
        let mut rows = Vec::new();
        for &tau in taus {
            let coarse = if tau == 1 { None } else { Some(analysis_for(&geom.coarsened(tau)?)?) };
            for &norm in norms {
                let f = full.report(norm);
                let l = coarse.as_ref().map_or(f, |a| a.report(norm));
                let check = Theorem1Check::new(f, l);
                rows.push(SweepRow {
                    coverage_deg: cov,
                    tau,
                    norm,
                    cond_full: check.cond_full,
                    cond_low: check.cond_low,
                    holds: check.holds,
                });
            }
        }
        Ok(rows)
    });
    let mut out = Vec::new();
    for rows in per_coverage {
        out.extend(rows?);
    }
    Ok(out)
}

pub const SWEEP_CSV_HEADER: &str = "coverage_deg,tau,norm,cond_full,cond_low,holds";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{:.17e},{:.17e},{}\n",
            r.coverage_deg, r.tau, r.norm, r.cond_full, r.cond_low, r.holds
        ));
    }
    s
}
