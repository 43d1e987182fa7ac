//! Profile superpositions and Pythagorean expansion audits.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::quartic_terms;
use crate::spectral::{dipolar_convolve, ComplexField};

/// Profiles `psi^j` with per-profile time and lattice-shift sequences.
///
/// `t_seq[j][n]` and `x_seq[j][n]` are the parameters of profile `j` at index `n`.
#[derive(Debug, Clone)]
pub struct ProfileSpec {
    psis: Vec<ComplexField>,
    t_seq: Vec<Vec<f64>>,
    x_seq: Vec<Vec<[i64; 3]>>,
    remainder: Option<ComplexField>,
}

fn shift_length(u: &ComplexField, s: [i64; 3]) -> f64 {
    let h = u.grid().spec().spacing();
    (0..3).map(|a| (s[a] as f64 * h[a]).powi(2)).sum::<f64>().sqrt()
}

fn zero_or_diverging(seq: &[f64]) -> bool {
    seq.iter().all(|&v| v == 0.0) || seq.windows(2).all(|w| w[1] > w[0])
}

impl ProfileSpec {
    pub fn new(
        psis: Vec<ComplexField>,
        t_seq: Vec<Vec<f64>>,
        x_seq: Vec<Vec<[i64; 3]>>,
        remainder: Option<ComplexField>,
    ) -> Result<Self> {
        if psis.is_empty() {
            return Err(Error::Precondition("at least one profile is required".into()));
        }
        if t_seq.len() != psis.len() || x_seq.len() != psis.len() {
            return Err(Error::Precondition(
                "one t-sequence and one x-sequence per profile".into(),
            ));
        }
        let len = t_seq[0].len();
        if len == 0 || t_seq.iter().any(|s| s.len() != len) || x_seq.iter().any(|s| s.len() != len) {
            return Err(Error::Precondition(
                "parameter sequences must be non-empty and of equal length".into(),
            ));
        }
        let grid = psis[0].grid().clone();
        if psis.iter().chain(remainder.iter()).any(|f| !f.grid().same_shape(&grid)) {
            return Err(Error::Precondition("profiles live on different grids".into()));
        }
        let u = &psis[0];
        for j in 0..psis.len() {
            let abs_t: Vec<f64> = t_seq[j].iter().map(|t| t.abs()).collect();
            if t_seq[j].iter().any(|t| !t.is_finite()) || !zero_or_diverging(&abs_t) {
                return Err(Error::Precondition(format!(
                    "t-sequence of profile {j} is neither identically 0 nor diverging"
                )));
            }
            let abs_x: Vec<f64> = x_seq[j].iter().map(|&s| shift_length(u, s)).collect();
            if !zero_or_diverging(&abs_x) {
                return Err(Error::Precondition(format!(
                    "x-sequence of profile {j} is neither identically 0 nor diverging"
                )));
            }
        }
        if len > 1 {
            for j in 0..psis.len() {
                for k in j + 1..psis.len() {
                    let d: Vec<f64> = (0..len)
                        .map(|n| {
                            let s = [0, 1, 2].map(|a| x_seq[j][n][a] - x_seq[k][n][a]);
                            shift_length(u, s) + (t_seq[j][n] - t_seq[k][n]).abs()
                        })
                        .collect();
                    if !d.windows(2).all(|w| w[1] > w[0]) {
                        return Err(Error::Precondition(format!(
                            "profiles {j} and {k} do not diverge from each other"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            psis,
            t_seq,
            x_seq,
            remainder,
        })
    }

    pub fn psis(&self) -> &[ComplexField] {
        &self.psis
    }

    pub fn remainder(&self) -> Option<&ComplexField> {
        self.remainder.as_ref()
    }

    /// Number of sequence indices.
    pub fn len(&self) -> usize {
        self.t_seq[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_index(&self, n: usize) -> Result<()> {
        if n >= self.len() {
            return Err(Error::Precondition(format!(
                "sequence index {n} out of range (length {})",
                self.len()
            )));
        }
        Ok(())
    }

    /// `U(-t_n^j) tau_{x_n^j} psi^j`.
    pub fn component(&self, j: usize, n: usize) -> Result<ComplexField> {
        self.check_index(n)?;
        let psi = self.psis.get(j).ok_or_else(|| {
            Error::Precondition(format!("profile index {j} out of range"))
        })?;
        let moved = psi.shifted(self.x_seq[j][n]);
        let t = self.t_seq[j][n];
        Ok(if t == 0.0 { moved } else { moved.free_evolve(-t) })
    }

    fn check_margins(&self, n: usize) -> Result<()> {
        for (j, psi) in self.psis.iter().enumerate() {
            let (center, width) = centroid_and_width(psi);
            let spec = psi.grid().spec().clone();
            let h = spec.spacing();
            for a in 0..3 {
                let reach = (center[a] + self.x_seq[j][n][a] as f64 * h[a]).abs() + 4.0 * width[a];
                let half = 0.5 * spec.len[a];
                if reach > half {
                    return Err(Error::BoxOverflow(format!(
                        "profile {j} at index {n} reaches {reach:.3} on axis {a}, half box {half:.3}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Center and per-axis rms width of `|u|^2`.
pub fn centroid_and_width(u: &ComplexField) -> ([f64; 3], [f64; 3]) {
    let mut m = 0.0;
    let mut first = [0.0; 3];
    let mut second = [0.0; 3];
    let vals = u.values();
    u.grid().for_each_node(|i, x| {
        let r = vals[i].norm_sqr();
        m += r;
        for a in 0..3 {
            first[a] += r * x[a];
            second[a] += r * x[a] * x[a];
        }
    });
    if m == 0.0 {
        return ([0.0; 3], [0.0; 3]);
    }
    let c = first.map(|f| f / m);
    let w = [0, 1, 2].map(|a| (second[a] / m - c[a] * c[a]).max(0.0).sqrt());
    (c, w)
}

/// `v_n = sum_j U(-t_n^j) tau_{x_n^j} psi^j + R`.
pub fn synthesize(spec: &ProfileSpec, n: usize) -> Result<ComplexField> {
    spec.check_index(n)?;
    spec.check_margins(n)?;
    let mut v = match &spec.remainder {
        Some(r) => r.clone(),
        None => spec.psis[0].clone().scaled(0.0),
    };
    for j in 0..spec.psis.len() {
        v.axpy(1.0.into(), &spec.component(j, n)?);
    }
    Ok(v)
}

/// Residuals of the four expansions at one sequence index.
#[derive(Debug, Clone, Serialize)]
pub struct ExpansionRow {
    pub n: usize,
    pub min_separation: f64,
    pub mass: f64,
    pub kinetic: f64,
    pub local: f64,
    pub nonlocal: f64,
    /// `sum_j ||U(-t_n^j) psi^j||_4^4`.
    pub profile_l4: f64,
    pub remainder_l4: f64,
    pub remainder_sup: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpansionAudit {
    pub rows: Vec<ExpansionRow>,
    /// Non-increasing along `n_list`, per residual: mass, kinetic, local, nonlocal.
    pub decreasing: [bool; 4],
}

struct Parts {
    mass: f64,
    kinetic: f64,
    local: f64,
    nonlocal: f64,
}

fn parts(u: &ComplexField) -> Result<Parts> {
    let rho = u.density();
    let conv = dipolar_convolve(&rho)?;
    let h3 = u.grid().cell_volume();
    let nonlocal = conv.values().iter().zip(rho.values()).map(|(c, r)| c.re * r.re).sum::<f64>() * h3;
    Ok(Parts {
        mass: u.mass(),
        kinetic: u.kinetic(),
        local: quartic_terms(u).local,
        nonlocal,
    })
}

/// Pythagorean residuals of `v_n` for each `n` in `n_list`.
pub fn audit_expansions(spec: &ProfileSpec, n_list: &[usize]) -> Result<ExpansionAudit> {
    if n_list.is_empty() || !n_list.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::Precondition("n_list must be non-empty and increasing".into()));
    }
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let v = synthesize(spec, n)?;
        let whole = parts(&v)?;
        let mut sum = Parts {
            mass: 0.0,
            kinetic: 0.0,
            local: 0.0,
            nonlocal: 0.0,
        };
        let mut profile_l4 = 0.0;
        let mut comps: Vec<&ComplexField> = Vec::new();
        let owned: Vec<ComplexField> = (0..spec.psis.len())
            .map(|j| spec.component(j, n))
            .collect::<Result<_>>()?;
        comps.extend(owned.iter());
        comps.extend(spec.remainder.iter());
        for (j, c) in comps.iter().enumerate() {
            let q = parts(c)?;
            if j < owned.len() {
                profile_l4 += q.local;
            }
            sum.mass += q.mass;
            sum.kinetic += q.kinetic;
            sum.local += q.local;
            sum.nonlocal += q.nonlocal;
        }
        let mut min_separation = f64::INFINITY;
        for j in 0..spec.psis.len() {
            for k in j + 1..spec.psis.len() {
                let s = [0, 1, 2].map(|a| spec.x_seq[j][n][a] - spec.x_seq[k][n][a]);
                let d = shift_length(&v, s) + (spec.t_seq[j][n] - spec.t_seq[k][n]).abs();
                min_separation = min_separation.min(d);
            }
        }
        let (remainder_l4, remainder_sup) = match &spec.remainder {
            Some(r) => (r.l4_pow4().powf(0.25), r.sup_norm()),
            None => (0.0, 0.0),
        };
        rows.push(ExpansionRow {
            n,
            min_separation,
            mass: (whole.mass - sum.mass).abs(),
            kinetic: (whole.kinetic - sum.kinetic).abs(),
            local: (whole.local - sum.local).abs(),
            nonlocal: (whole.nonlocal - sum.nonlocal).abs(),
            profile_l4,
            remainder_l4,
            remainder_sup,
        });
    }
    let non_increasing = |f: fn(&ExpansionRow) -> f64| rows.windows(2).all(|w| f(&w[1]) <= f(&w[0]));
    let decreasing = [
        non_increasing(|r| r.mass),
        non_increasing(|r| r.kinetic),
        non_increasing(|r| r.local),
        non_increasing(|r| r.nonlocal),
    ];
    Ok(ExpansionAudit { rows, decreasing })
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossTermRow {
    pub separation: f64,
    pub cross: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossTermDecay {
    pub rows: Vec<CrossTermRow>,
    /// `int (K * |psi_a|^2) |psi_a|^2`.
    pub self_energy: f64,
    pub monotone: bool,
    /// Least-squares slope of `log|cross|` against `log separation` over nonzero separations.
    pub exponent: Option<f64>,
}

/// `int (K * |psi_a|^2) tau_s |psi_b|^2` for each lattice shift `s`.
pub fn cross_term_decay(
    psi_a: &ComplexField,
    psi_b: &ComplexField,
    separations: &[[i64; 3]],
) -> Result<CrossTermDecay> {
    if !psi_a.grid().same_shape(psi_b.grid()) {
        return Err(Error::Precondition("profiles live on different grids".into()));
    }
    let rho_a = psi_a.density();
    let pot = dipolar_convolve(&rho_a)?;
    let h3 = psi_a.grid().cell_volume();
    let pair = |rho: &ComplexField| -> f64 {
        pot.values().iter().zip(rho.values()).map(|(c, r)| c.re * r.re).sum::<f64>() * h3
    };
    let self_energy = pair(&rho_a);
    let rho_b = psi_b.density();
    let rows: Vec<CrossTermRow> = separations
        .iter()
        .map(|&s| CrossTermRow {
            separation: shift_length(psi_a, s),
            cross: pair(&rho_b.shifted(s)),
        })
        .collect();
    let monotone = rows.windows(2).all(|w| w[1].cross.abs() < w[0].cross.abs() && w[1].separation > w[0].separation);
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.separation > 0.0 && r.cross != 0.0)
        .map(|r| (r.separation.ln(), r.cross.abs().ln()))
        .collect();
    let exponent = if pts.len() >= 2 {
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    } else {
        None
    };
    Ok(CrossTermDecay {
        rows,
        self_energy,
        monotone,
        exponent,
    })
}

/// `||U(-t) psi||_4` for each `t`.
pub fn free_l4_norms(psi: &ComplexField, times: &[f64]) -> Vec<f64> {
    times
        .iter()
        .map(|&t| psi.free_evolve(-t).l4_pow4().powf(0.25))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{Grid, GridSpec};
    use std::sync::Arc;

    fn grid(n: usize, len: f64) -> Arc<Grid> {
        Grid::new(GridSpec::cubic(n, len).unwrap())
    }

    fn gauss(g: &Arc<Grid>, sigma: [f64; 3]) -> ComplexField {
        ComplexField::from_real_fn(g, |x| {
            (-(0..3).map(|a| x[a] * x[a] / (2.0 * sigma[a] * sigma[a])).sum::<f64>()).exp()
        })
    }

    #[test]
    fn single_profile_is_reproduced() {
        let g = grid(16, 8.0);
        let psi = gauss(&g, [1.0; 3]);
        let spec = ProfileSpec::new(vec![psi.clone()], vec![vec![0.0]], vec![vec![[0; 3]]], None).unwrap();
        let v = synthesize(&spec, 0).unwrap();
        assert_eq!(v.values(), psi.values());
    }

    #[test]
    fn disjoint_translates_add_mass_exactly() {
        let g = grid(32, 16.0);
        let bump = ComplexField::from_real_fn(&g, |x| {
            let r2: f64 = x.iter().map(|c| c * c).sum();
            if r2 < 1.0 { (-1.0 / (1.0 - r2)).exp() } else { 0.0 }
        });
        let spec = ProfileSpec::new(
            vec![bump.clone(), bump.clone()],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            vec![vec![[0; 3]; 2], vec![[6, 0, 0], [12, 0, 0]]],
            None,
        )
        .unwrap();
        let audit = audit_expansions(&spec, &[0, 1]).unwrap();
        for row in &audit.rows {
            assert!(row.mass <= 1e-14 * bump.mass(), "{row:?}");
            assert!(row.local <= 1e-14 * bump.l4_pow4(), "{row:?}");
        }
    }

    #[test]
    fn separated_gaussians_have_vanishing_residuals() {
        let g = grid(64, 16.0);
        let psi = gauss(&g, [0.7, 0.7, 0.9]);
        let steps = [3, 6, 12, 24];
        let spec = ProfileSpec::new(
            vec![psi.clone(), psi.clone()],
            vec![vec![0.0; 4], vec![0.0; 4]],
            vec![vec![[0; 3]; 4], steps.iter().map(|&s| [s, 0, 0]).collect()],
            None,
        )
        .unwrap();
        let audit = audit_expansions(&spec, &[0, 1, 2, 3]).unwrap();
        assert!(audit.decreasing.iter().all(|&d| d), "{audit:?}");
        let last = audit.rows.last().unwrap();
        assert!(last.mass <= 1e-6 * psi.mass(), "{last:?}");
        assert!(last.kinetic <= 1e-5 * psi.kinetic(), "{last:?}");
        for w in audit.rows.windows(2) {
            assert!(w[1].local <= 0.5 * w[0].local, "{audit:?}");
            assert!(w[1].nonlocal <= 0.5 * w[0].nonlocal, "{audit:?}");
        }
    }

    #[test]
    fn overflowing_translate_is_rejected() {
        let g = grid(16, 8.0);
        let psi = gauss(&g, [1.0; 3]);
        let spec = ProfileSpec::new(vec![psi], vec![vec![0.0]], vec![vec![[5, 0, 0]]], None).unwrap();
        assert!(matches!(synthesize(&spec, 0), Err(Error::BoxOverflow(_))));
    }

    #[test]
    fn converging_profiles_are_refused() {
        let g = grid(16, 8.0);
        let psi = gauss(&g, [0.5; 3]);
        let err = ProfileSpec::new(
            vec![psi.clone(), psi],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            vec![vec![[1, 0, 0], [2, 0, 0]], vec![[1, 0, 0], [2, 0, 0]]],
            None,
        );
        assert!(matches!(err, Err(Error::Precondition(_))));
        let g = grid(16, 8.0);
        let err = ProfileSpec::new(
            vec![gauss(&g, [0.5; 3])],
            vec![vec![1.0, 0.5]],
            vec![vec![[0; 3]; 2]],
            None,
        );
        assert!(matches!(err, Err(Error::Precondition(_))));
    }

    #[test]
    fn cross_term_at_zero_shift_is_self_energy() {
        let g = grid(32, 16.0);
        let psi = gauss(&g, [0.8, 0.8, 1.6]);
        let d = cross_term_decay(&psi, &psi, &[[0; 3], [4, 0, 0]]).unwrap();
        assert!((d.rows[0].cross - d.self_energy).abs() <= 1e-14 * d.self_energy.abs());
        let q = quartic_terms(&psi).dipolar;
        assert!((d.self_energy - q).abs() <= 1e-12 * q.abs());
    }

    #[test]
    fn free_l4_norm_decreases() {
        let g = grid(32, 32.0);
        let psi = gauss(&g, [1.0; 3]);
        let norms = free_l4_norms(&psi, &[0.0, 0.5, 1.0, 2.0, 4.0]);
        assert!(norms.windows(2).all(|w| w[1] < w[0]), "{norms:?}");
    }
}
