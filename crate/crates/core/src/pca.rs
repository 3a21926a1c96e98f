//! Principal-component averaging of the pool.
//!
//! For forecast day `d` the panel holds the pool rows of the averaging window
//! (`window_len` days before `d`) and of `d` itself. Each row is standardized
//! across window lengths; principal components of the standardized panel are
//! extracted; the standardized actual price is regressed on the leading
//! components over the averaging window; the fitted model is applied to the
//! rows of `d` and mapped back with the row mean and standard deviation.
//!
//! Components are scores `Ẑ v_k` for the unit eigenvectors `v_k` of `Ẑ'Ẑ`
//! (the loadings), ordered by decreasing eigenvalue. Their squared norms are
//! the eigenvalues and their variances (divided by the row count) are the
//! eigenvalues of `Ẑ'Ẑ / N`. Each loading vector has its largest-magnitude
//! entry positive.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::combine::simple_average;
use crate::data::{DayValues, HOURS};
use crate::error::{Error, Result};
use crate::lasso::{self, Criterion, LambdaGrid, LambdaSelector, LassoFit};
use crate::ols::{cross_product, least_squares};
use crate::pool::ForecastPool;

/// Default number of components considered.
pub const K_MAX: usize = 20;

/// Standardized panel for one forecast day, optionally with components.
#[derive(Clone, Debug)]
pub struct PcPanel {
    /// Pool day being forecast.
    pub day: usize,
    pub window_len: usize,
    /// Row means across window lengths.
    pub mu: Vec<f64>,
    /// Row standard deviations (`n - 1` denominator).
    pub sigma: Vec<f64>,
    /// Rows whose forecasts are all equal; their standardized row is zero.
    pub degenerate: Vec<bool>,
    /// Standardized forecasts, one row per hour.
    pub z_hat: DMatrix<f64>,
    /// Standardized actuals for the averaging-window rows.
    pub z_actual: Vec<f64>,
    /// `N × K` component scores.
    pub components: DMatrix<f64>,
    /// `n_windows × K` unit loadings.
    pub loadings: DMatrix<f64>,
    /// Eigenvalues of `Ẑ'Ẑ` for the extracted components.
    pub eigenvalues: Vec<f64>,
}

impl PcPanel {
    pub fn n_rows(&self) -> usize {
        self.z_hat.nrows()
    }

    /// Rows of the averaging window (the rest belong to the forecast day).
    pub fn n_train(&self) -> usize {
        self.window_len * HOURS
    }

    /// `‖PC_k‖² / N`.
    pub fn component_variances(&self) -> Vec<f64> {
        let n = self.n_rows() as f64;
        self.components.column_iter().map(|c| c.norm_squared() / n).collect()
    }
}

/// Builds the standardized panel for pool day `day`.
pub fn standardize_panel(pool: &ForecastPool, day: usize, window_len: usize) -> Result<PcPanel> {
    if day >= pool.n_days() || window_len == 0 || day < window_len {
        return Err(Error::Alignment(format!(
            "day {day} needs {window_len} earlier days in a pool of {}",
            pool.n_days()
        )));
    }
    if pool.n_windows() < 2 {
        return Err(Error::Config("principal components need at least 2 windows".into()));
    }
    let first = (day - window_len) * HOURS;
    let rows = (window_len + 1) * HOURS;
    let w = pool.n_windows();
    let mut mu = Vec::with_capacity(rows);
    let mut sigma = Vec::with_capacity(rows);
    let mut degenerate = Vec::with_capacity(rows);
    let mut z_hat = DMatrix::zeros(rows, w);
    let mut z_actual = Vec::with_capacity(window_len * HOURS);
    for i in 0..rows {
        let row = pool.row(first + i);
        let m = row.iter().sum::<f64>() / w as f64;
        let s = (row.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (w - 1) as f64).sqrt();
        let flat = !(s > 0.0);
        if !flat {
            for (j, v) in row.iter().enumerate() {
                z_hat[(i, j)] = (v - m) / s;
            }
        }
        if i < window_len * HOURS {
            let a = pool.actual()[first + i];
            z_actual.push(if flat { 0.0 } else { (a - m) / s });
        }
        mu.push(m);
        sigma.push(s);
        degenerate.push(flat);
    }
    Ok(PcPanel {
        day,
        window_len,
        mu,
        sigma,
        degenerate,
        z_hat,
        z_actual,
        components: DMatrix::zeros(rows, 0),
        loadings: DMatrix::zeros(w, 0),
        eigenvalues: Vec::new(),
    })
}

/// Extracts the first `k` components of the panel.
pub fn extract_components(mut panel: PcPanel, k: usize) -> Result<PcPanel> {
    let (n, w) = panel.z_hat.shape();
    if k > n.min(w) {
        return Err(Error::Config(format!(
            "cannot extract {k} components from a {n} x {w} panel"
        )));
    }
    let eig = SymmetricEigen::new(cross_product(&panel.z_hat));
    let mut order: Vec<usize> = (0..w).collect();
    // stable sort keeps the solver's order among equal eigenvalues
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut loadings = DMatrix::zeros(w, k);
    let mut eigenvalues = Vec::with_capacity(k);
    for (c, &idx) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let pivot = v.iter().copied().fold(0.0_f64, |m, x| if x.abs() > m.abs() { x } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        loadings.set_column(c, &(v * sign));
        eigenvalues.push(eig.eigenvalues[idx].max(0.0));
    }
    panel.components = &panel.z_hat * &loadings;
    panel.loadings = loadings;
    panel.eigenvalues = eigenvalues;
    Ok(panel)
}

/// How many components enter the regression.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KSelector {
    Fixed(usize),
    Criterion(Criterion),
}

impl fmt::Display for KSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KSelector::Fixed(k) => write!(f, "{k}"),
            KSelector::Criterion(c) => write!(f, "{c}"),
        }
    }
}

/// Fitted component regression.
#[derive(Clone, Debug, PartialEq)]
pub struct PcrFit {
    pub alpha: f64,
    /// One coefficient per component of the panel used (zeros beyond
    /// `k_used` or where LASSO dropped the component).
    pub beta: Vec<f64>,
    pub k_used: usize,
    pub rss: f64,
    pub n: usize,
}

/// A panel with `kmax` components, shared by the component-based combiners
/// of one day.
#[derive(Clone, Debug)]
pub struct PcDay {
    pub panel: PcPanel,
    /// Non-degenerate averaging-window rows.
    train: Vec<usize>,
}

impl PcDay {
    pub fn new(pool: &ForecastPool, day: usize, window_len: usize, kmax: usize) -> Result<Self> {
        let panel = standardize_panel(pool, day, window_len)?;
        let k = kmax.min(panel.n_rows()).min(pool.n_windows());
        let panel = extract_components(panel, k)?;
        let train = (0..panel.n_train()).filter(|&i| !panel.degenerate[i]).collect();
        Ok(PcDay { panel, train })
    }

    pub fn kmax(&self) -> usize {
        self.panel.components.ncols()
    }

    fn design(&self, columns: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
        let pcs = &self.panel.components;
        let x = DMatrix::from_fn(self.train.len(), columns.len() + 1, |r, c| {
            if c == 0 {
                1.0
            } else {
                pcs[(self.train[r], columns[c - 1])]
            }
        });
        let y = DVector::from_iterator(self.train.len(), self.train.iter().map(|&i| self.panel.z_actual[i]));
        (x, y)
    }

    /// OLS of the standardized actual on the intercept and `columns`.
    pub fn ols_fit(&self, columns: &[usize]) -> Result<PcrFit> {
        let (x, y) = self.design(columns);
        let sol = least_squares(&x, &y)?;
        let mut beta = vec![0.0; self.kmax()];
        for (c, &j) in columns.iter().enumerate() {
            beta[j] = sol.coefficients[c + 1];
        }
        Ok(PcrFit {
            alpha: sol.coefficients[0],
            beta,
            k_used: columns.len(),
            rss: sol.rss,
            n: y.len(),
        })
    }

    /// Component regression with `K` fixed or chosen by a criterion over
    /// `1..=kmax` nested models.
    pub fn pca_fit(&self, selector: KSelector) -> Result<PcrFit> {
        match selector {
            KSelector::Fixed(k) => {
                if k > self.kmax() {
                    return Err(Error::Config(format!(
                        "K = {k} exceeds the {} extracted components",
                        self.kmax()
                    )));
                }
                self.ols_fit(&(0..k).collect::<Vec<_>>())
            }
            KSelector::Criterion(c) => {
                let mut best: Option<(f64, PcrFit)> = None;
                for k in 1..=self.kmax() {
                    let fit = self.ols_fit(&(0..k).collect::<Vec<_>>())?;
                    let ic = lasso::criteria(fit.n, fit.rss, k + 1).get(c);
                    if best.as_ref().is_none_or(|(b, _)| ic < *b) {
                        best = Some((ic, fit));
                    }
                }
                best.map(|(_, f)| f)
                    .ok_or_else(|| Error::Config("no components to select from".into()))
            }
        }
    }

    /// LASSO on all extracted components.
    pub fn lasso_fit(&self, selector: LambdaSelector, grid: &LambdaGrid) -> Result<LassoFit> {
        let all: Vec<usize> = (0..self.kmax()).collect();
        let (x, y) = self.design(&all);
        let x = x.remove_column(0);
        lasso::select_fit(&x, &y, grid, selector)
    }

    pub fn lpca_fit(&self, selector: LambdaSelector, grid: &LambdaGrid) -> Result<PcrFit> {
        let fit = self.lasso_fit(selector, grid)?;
        Ok(PcrFit {
            alpha: fit.intercept,
            k_used: fit.df,
            beta: fit.beta,
            rss: fit.rss,
            n: fit.n,
        })
    }

    /// LASSO selection followed by an OLS refit of the selected components.
    pub fn two_step_fit(&self, criterion: Criterion, grid: &LambdaGrid) -> Result<PcrFit> {
        let fit = self.lasso_fit(LambdaSelector::Criterion(criterion), grid)?;
        let selected: Vec<usize> = (0..self.kmax()).filter(|&j| fit.beta[j] != 0.0).collect();
        self.ols_fit(&selected)
    }

    /// Standardized-scale fitted value for panel row `i`.
    pub fn fitted(&self, fit: &PcrFit, i: usize) -> f64 {
        let row = self.panel.components.row(i);
        fit.alpha + fit.beta.iter().zip(row.iter()).map(|(b, x)| b * x).sum::<f64>()
    }

    /// Forecasts for the forecast day in price units.
    pub fn forecast(&self, fit: &PcrFit) -> DayValues {
        let p = &self.panel;
        std::array::from_fn(|h| {
            let i = p.n_train() + h;
            if p.degenerate[i] {
                p.mu[i]
            } else {
                self.fitted(fit, i) * p.sigma[i] + p.mu[i]
            }
        })
    }

    pub(crate) fn all_degenerate(&self) -> bool {
        self.train.is_empty()
    }
}

pub(crate) fn with_fallback(
    pool: &ForecastPool,
    day: usize,
    pc: &PcDay,
    fit: impl FnOnce(&PcDay) -> Result<PcrFit>,
) -> Result<DayValues> {
    if pc.all_degenerate() {
        return simple_average(pool, day);
    }
    Ok(pc.forecast(&fit(pc)?))
}

/// Principal-component averaging with `K` fixed or chosen by a criterion.
pub fn pca_average(
    pool: &ForecastPool,
    day: usize,
    selector: KSelector,
    kmax: usize,
    window_len: usize,
) -> Result<DayValues> {
    let pc = PcDay::new(pool, day, window_len, kmax.max(fixed_k(selector)))?;
    with_fallback(pool, day, &pc, |pc| pc.pca_fit(selector))
}

fn fixed_k(selector: KSelector) -> usize {
    match selector {
        KSelector::Fixed(k) => k,
        KSelector::Criterion(_) => 0,
    }
}

/// Component regression estimated by LASSO over `k` components.
pub fn lpca_average(
    pool: &ForecastPool,
    day: usize,
    k: usize,
    selector: LambdaSelector,
    grid: &LambdaGrid,
    window_len: usize,
) -> Result<DayValues> {
    let pc = PcDay::new(pool, day, window_len, k)?;
    with_fallback(pool, day, &pc, |pc| pc.lpca_fit(selector, grid))
}

/// LASSO selection of components, then an OLS refit.
pub fn two_step_average(
    pool: &ForecastPool,
    day: usize,
    k: usize,
    criterion: Criterion,
    grid: &LambdaGrid,
    window_len: usize,
) -> Result<DayValues> {
    let pc = PcDay::new(pool, day, window_len, k)?;
    with_fallback(pool, day, &pc, |pc| pc.two_step_fit(criterion, grid))
}
