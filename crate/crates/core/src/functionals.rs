//! The catalog of functionals: definitions, influence functions and the
//! per-sample leave-one-out estimator terms.
//!
//! Every functional is evaluated on [`Density`] objects, so the same code
//! serves fitted KDEs, their leave-one-out views and analytic test densities.
//! Influence functions are written as `core(x) - offset`, where the offset is
//! the expectation of the core under the relevant density. Where an identity
//! such as `int p = 1` turns the offset into a closed form, the closed form is
//! used; this keeps the closed-form leave-one-out rows algebraically identical
//! to the generic `T(p_-i) + psi(X_i; p_-i)` assembly on any quadrature grid.

use std::fmt;
use std::sync::Arc;

use crate::density::{Density, KdeModel, DENSITY_FLOOR};
use crate::error::{Error, Result};
use crate::par;
use crate::quadrature::{GridSpec, LooGridCache, LooPowerIntegrals};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    ShannonEntropy,
    TsallisEntropy,
    RenyiEntropy,
    L2Divergence,
    HellingerDivergence,
    ChiSquaredDivergence,
    FDivergence,
    KlDivergence,
    TsallisDivergence,
    RenyiDivergence,
    CondKlDivergence,
    CondTsallisDivergence,
    ShannonMi,
    CondTsallisMi,
    PowerIntegral,
}

impl Kind {
    pub const ALL: [Kind; 15] = [
        Kind::ShannonEntropy,
        Kind::TsallisEntropy,
        Kind::RenyiEntropy,
        Kind::L2Divergence,
        Kind::HellingerDivergence,
        Kind::ChiSquaredDivergence,
        Kind::FDivergence,
        Kind::KlDivergence,
        Kind::TsallisDivergence,
        Kind::RenyiDivergence,
        Kind::CondKlDivergence,
        Kind::CondTsallisDivergence,
        Kind::ShannonMi,
        Kind::CondTsallisMi,
        Kind::PowerIntegral,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Kind::ShannonEntropy => "shannon_entropy",
            Kind::TsallisEntropy => "tsallis_entropy",
            Kind::RenyiEntropy => "renyi_entropy",
            Kind::L2Divergence => "l2",
            Kind::HellingerDivergence => "hellinger",
            Kind::ChiSquaredDivergence => "chi_squared",
            Kind::FDivergence => "f_divergence",
            Kind::KlDivergence => "kl",
            Kind::TsallisDivergence => "tsallis_div",
            Kind::RenyiDivergence => "renyi_div",
            Kind::CondKlDivergence => "cond_kl",
            Kind::CondTsallisDivergence => "cond_tsallis",
            Kind::ShannonMi => "shannon_mi",
            Kind::CondTsallisMi => "cond_tsallis_mi",
            Kind::PowerIntegral => "power_integral",
        }
    }

    /// Accepts the short tags and the long `*_divergence` spellings.
    pub fn parse(s: &str) -> Option<Kind> {
        let s = s.trim().to_ascii_lowercase();
        let long = match s.as_str() {
            "l2_divergence" => Some(Kind::L2Divergence),
            "hellinger_divergence" => Some(Kind::HellingerDivergence),
            "chi_squared_divergence" | "chi2" => Some(Kind::ChiSquaredDivergence),
            "kl_divergence" => Some(Kind::KlDivergence),
            "tsallis_divergence" => Some(Kind::TsallisDivergence),
            "renyi_divergence" => Some(Kind::RenyiDivergence),
            "cond_kl_divergence" => Some(Kind::CondKlDivergence),
            "cond_tsallis_divergence" => Some(Kind::CondTsallisDivergence),
            _ => None,
        };
        long.or_else(|| Kind::ALL.into_iter().find(|k| k.tag() == s))
    }

    /// Number of sample sets the functional takes.
    pub fn arity(self) -> usize {
        match self {
            Kind::ShannonEntropy
            | Kind::TsallisEntropy
            | Kind::RenyiEntropy
            | Kind::ShannonMi
            | Kind::CondTsallisMi => 1,
            _ => 2,
        }
    }

    pub fn needs_alpha(self) -> bool {
        matches!(
            self,
            Kind::TsallisEntropy
                | Kind::RenyiEntropy
                | Kind::TsallisDivergence
                | Kind::RenyiDivergence
                | Kind::CondTsallisDivergence
                | Kind::CondTsallisMi
        )
    }

    pub fn is_conditional(self) -> bool {
        matches!(
            self,
            Kind::CondKlDivergence | Kind::CondTsallisDivergence | Kind::CondTsallisMi
        )
    }

    pub fn is_mi(self) -> bool {
        matches!(self, Kind::ShannonMi | Kind::CondTsallisMi)
    }

    /// Conditional divergences are ordinary divergences of the joint
    /// densities of `(X, Z)` and `(Y, Z)`.
    fn base(self) -> Kind {
        match self {
            Kind::CondKlDivergence => Kind::KlDivergence,
            Kind::CondTsallisDivergence => Kind::TsallisDivergence,
            k => k,
        }
    }

    /// The Tsallis family, whose influence functions vanish at `f = g`.
    pub fn degenerates_at_equality(self) -> bool {
        matches!(
            self,
            Kind::TsallisDivergence
                | Kind::RenyiDivergence
                | Kind::CondTsallisDivergence
                | Kind::HellingerDivergence
                | Kind::PowerIntegral
        )
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Which functional to estimate, with its parameters.
#[derive(Clone)]
pub struct FunctionalSpec {
    kind: Kind,
    alpha: Option<f64>,
    exponents: Option<(f64, f64)>,
    phi: Option<(ScalarFn, ScalarFn)>,
    z_dim: usize,
    y_dim: Option<usize>,
}

impl fmt::Debug for FunctionalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionalSpec")
            .field("kind", &self.kind)
            .field("alpha", &self.alpha)
            .field("exponents", &self.exponents)
            .field("phi", &self.phi.as_ref().map(|_| "<callbacks>"))
            .field("z_dim", &self.z_dim)
            .field("y_dim", &self.y_dim)
            .finish()
    }
}

impl FunctionalSpec {
    /// Unvalidated spec; parameters are added with the `with_*` builders and
    /// checked by [`validate`](Self::validate) at every entry point.
    pub fn new(kind: Kind) -> Self {
        Self {
            kind,
            alpha: None,
            exponents: None,
            phi: None,
            z_dim: 0,
            y_dim: None,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn with_exponents(mut self, a: f64, b: f64) -> Self {
        self.exponents = Some((a, b));
        self
    }

    /// `phi` and its derivative, for [`Kind::FDivergence`].
    pub fn with_phi(mut self, phi: ScalarFn, dphi: ScalarFn) -> Self {
        self.phi = Some((phi, dphi));
        self
    }

    /// Named `phi` for the f-divergence: `kl` (t ln t), `reverse_kl` (-ln t),
    /// `hellinger` ((sqrt t - 1)^2), `chi_squared` ((t - 1)^2) or `js`
    /// (Jensen-Shannon, t ln t - (1 + t) ln((1 + t) / 2)).
    pub fn with_phi_preset(self, name: &str) -> Result<Self> {
        let (phi, dphi): (ScalarFn, ScalarFn) = match name.trim().to_ascii_lowercase().as_str() {
            "kl" => (Arc::new(|t: f64| t * t.ln()), Arc::new(|t: f64| t.ln() + 1.0)),
            "reverse_kl" => (Arc::new(|t: f64| -t.ln()), Arc::new(|t: f64| -1.0 / t)),
            "hellinger" => (
                Arc::new(|t: f64| (t.sqrt() - 1.0).powi(2)),
                Arc::new(|t: f64| 1.0 - 1.0 / t.sqrt()),
            ),
            "chi_squared" => (
                Arc::new(|t: f64| (t - 1.0) * (t - 1.0)),
                Arc::new(|t: f64| 2.0 * (t - 1.0)),
            ),
            "js" => (
                Arc::new(|t: f64| t * t.ln() - (1.0 + t) * (0.5 * (1.0 + t)).ln()),
                Arc::new(|t: f64| (2.0 * t / (1.0 + t)).ln()),
            ),
            other => {
                return Err(Error::InvalidSpec(format!(
                    "unknown phi preset '{other}' (kl, reverse_kl, hellinger, chi_squared, js)"
                )))
            }
        };
        Ok(self.with_phi(phi, dphi))
    }

    /// Width of the trailing conditioning block.
    pub fn with_z_dim(mut self, z_dim: usize) -> Self {
        self.z_dim = z_dim;
        self
    }

    /// Width of the `Y` block for mutual informations (default: half of the
    /// non-conditioning columns, rounded down).
    pub fn with_y_dim(mut self, y_dim: usize) -> Self {
        self.y_dim = Some(y_dim);
        self
    }

    pub fn shannon_entropy() -> Self {
        Self::new(Kind::ShannonEntropy)
    }

    pub fn kl() -> Self {
        Self::new(Kind::KlDivergence)
    }

    pub fn hellinger() -> Self {
        Self::new(Kind::HellingerDivergence)
    }

    pub fn power_integral(a: f64, b: f64) -> Result<Self> {
        let s = Self::new(Kind::PowerIntegral).with_exponents(a, b);
        s.validate()?;
        Ok(s)
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn exponents(&self) -> Option<(f64, f64)> {
        self.exponents
    }

    pub fn z_dim(&self) -> usize {
        self.z_dim
    }

    pub fn y_dim(&self) -> Option<usize> {
        self.y_dim
    }

    pub fn arity(&self) -> usize {
        self.kind.arity()
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.needs_alpha() {
            let a = self.alpha.ok_or_else(|| {
                Error::InvalidSpec(format!("{} requires alpha", self.kind))
            })?;
            if !a.is_finite() || a == 0.0 || a == 1.0 {
                return Err(Error::BadAlpha(a));
            }
        }
        if self.kind == Kind::PowerIntegral {
            let (a, b) = self.exponents.ok_or_else(|| {
                Error::InvalidSpec("power_integral requires exponents (a, b)".into())
            })?;
            let excluded = |v: f64| v == 0.0 || v == 1.0 || !v.is_finite();
            if (a + b - 1.0).abs() > 1e-12 || excluded(a) || excluded(b) {
                return Err(Error::BadExponents { a, b });
            }
        }
        if self.kind == Kind::FDivergence && self.phi.is_none() {
            return Err(Error::InvalidSpec(
                "f_divergence requires phi and its derivative".into(),
            ));
        }
        if self.kind.is_conditional() && self.z_dim == 0 {
            return Err(Error::InvalidSpec(format!(
                "{} needs a conditioning block (z_dim >= 1)",
                self.kind
            )));
        }
        if !self.kind.is_conditional() && self.z_dim != 0 {
            return Err(Error::InvalidSpec(format!(
                "{} takes no conditioning block",
                self.kind
            )));
        }
        if self.y_dim.is_some() && !self.kind.is_mi() {
            return Err(Error::InvalidSpec(format!(
                "{} takes no Y block width",
                self.kind
            )));
        }
        Ok(())
    }

    /// Errors unless the presence of a second sample set matches the arity.
    pub fn check_arity(&self, has_second: bool) -> Result<()> {
        match (self.arity(), has_second) {
            (1, true) => Err(Error::DimensionMismatch(format!(
                "{} takes one sample set, got two",
                self.kind
            ))),
            (2, false) => Err(Error::DimensionMismatch(format!(
                "{} takes two sample sets, got one",
                self.kind
            ))),
            _ => Ok(()),
        }
    }

    /// Column layout for `d`-dimensional samples (`None` for kinds without
    /// blocks); also checks that the conditioning block fits.
    pub fn layout(&self, d: usize) -> Result<Option<Layout>> {
        self.validate()?;
        if self.z_dim >= d {
            return Err(Error::DimensionMismatch(format!(
                "z_dim {} leaves no free columns in {d}-dimensional samples",
                self.z_dim
            )));
        }
        if !self.kind.is_mi() {
            return Ok(None);
        }
        let free = d - self.z_dim;
        let y = self.y_dim.unwrap_or(free / 2);
        if y == 0 || y >= free {
            return Err(Error::DimensionMismatch(format!(
                "{} needs non-empty X and Y blocks; {d} columns with z_dim {} and y_dim {y}",
                self.kind, self.z_dim
            )));
        }
        Ok(Some(Layout {
            x_dim: free - y,
            y_dim: y,
            z_dim: self.z_dim,
        }))
    }

    fn a(&self) -> f64 {
        self.alpha.unwrap_or(f64::NAN)
    }
}

/// Column blocks `[X | Y | Z]` of a joint sample for mutual informations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub x_dim: usize,
    pub y_dim: usize,
    pub z_dim: usize,
}

impl Layout {
    pub fn dim(&self) -> usize {
        self.x_dim + self.y_dim + self.z_dim
    }

    pub fn x_cols(&self) -> Vec<usize> {
        (0..self.x_dim).collect()
    }

    pub fn y_cols(&self) -> Vec<usize> {
        (self.x_dim..self.x_dim + self.y_dim).collect()
    }

    pub fn z_cols(&self) -> Vec<usize> {
        (self.x_dim + self.y_dim..self.dim()).collect()
    }

    pub fn xz_cols(&self) -> Vec<usize> {
        let mut c = self.x_cols();
        c.extend(self.z_cols());
        c
    }

    pub fn yz_cols(&self) -> Vec<usize> {
        let mut c = self.y_cols();
        c.extend(self.z_cols());
        c
    }

    /// Columns of each marginal model: `[X, Y]` without a conditioning block,
    /// `[XZ, YZ, Z]` with one.
    pub fn marginal_columns(&self) -> Vec<Vec<usize>> {
        if self.z_dim == 0 {
            vec![self.x_cols(), self.y_cols()]
        } else {
            vec![self.xz_cols(), self.yz_cols(), self.z_cols()]
        }
    }
}

#[derive(Debug, Clone)]
struct BlockCols {
    layout: Layout,
    x: Vec<usize>,
    y: Vec<usize>,
    z: Vec<usize>,
    xz: Vec<usize>,
    yz: Vec<usize>,
}

impl BlockCols {
    fn new(layout: Layout) -> Self {
        Self {
            layout,
            x: layout.x_cols(),
            y: layout.y_cols(),
            z: layout.z_cols(),
            xz: layout.xz_cols(),
            yz: layout.yz_cols(),
        }
    }
}

#[inline]
fn gather<'b>(x: &[f64], cols: &[usize], buf: &'b mut [f64; 8]) -> &'b [f64] {
    for (k, &c) in cols.iter().enumerate() {
        buf[k] = x[c];
    }
    &buf[..cols.len()]
}

#[inline]
fn fl(v: f64) -> f64 {
    if v.is_nan() || v < DENSITY_FLOOR {
        DENSITY_FLOOR
    } else {
        v
    }
}

/// The densities a functional is evaluated on.
#[derive(Clone, Copy)]
pub enum DensityPair<'a> {
    /// Entropies.
    Single(&'a dyn Density),
    /// Divergences and the power integral: `(f, g)` (or `(p_XZ, p_YZ)`).
    Pair(&'a dyn Density, &'a dyn Density),
    /// Shannon mutual information: joint `p_XY` and marginals.
    Mi {
        joint: &'a dyn Density,
        x: &'a dyn Density,
        y: &'a dyn Density,
        layout: Layout,
    },
    /// Conditional mutual information: joint `p_XYZ` and the marginals
    /// `p_XZ`, `p_YZ`, `p_Z`.
    CondMi {
        joint: &'a dyn Density,
        xz: &'a dyn Density,
        yz: &'a dyn Density,
        z: &'a dyn Density,
        layout: Layout,
    },
}

impl<'a> DensityPair<'a> {
    /// Joint plus marginals in [`Layout::marginal_columns`] order.
    pub fn with_marginals(joint: &'a dyn Density, parts: Vec<&'a dyn Density>, layout: Layout) -> Self {
        if layout.z_dim == 0 {
            DensityPair::Mi {
                joint,
                x: parts[0],
                y: parts[1],
                layout,
            }
        } else {
            DensityPair::CondMi {
                joint,
                xz: parts[0],
                yz: parts[1],
                z: parts[2],
                layout,
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DensityPair::Single(p) | DensityPair::Pair(p, _) => p.dim(),
            DensityPair::Mi { joint, .. } | DensityPair::CondMi { joint, .. } => joint.dim(),
        }
    }

    fn check(&self, spec: &FunctionalSpec, grid: &GridSpec) -> Result<()> {
        spec.validate()?;
        let ok = match (self, spec.kind) {
            (DensityPair::Single(_), k) => k.arity() == 1 && !k.is_mi(),
            (DensityPair::Pair(..), k) => k.arity() == 2,
            (DensityPair::Mi { .. }, Kind::ShannonMi) => true,
            (DensityPair::CondMi { .. }, Kind::CondTsallisMi) => true,
            _ => false,
        };
        if !ok {
            return Err(Error::DimensionMismatch(format!(
                "densities do not match the shape {} needs",
                spec.kind
            )));
        }
        let mismatch = |what: &str| {
            Err(Error::DimensionMismatch(format!(
                "{what} for {} on a {}-dimensional grid",
                spec.kind,
                grid.dim()
            )))
        };
        if self.dim() != grid.dim() {
            return mismatch("density dimension differs from grid");
        }
        match *self {
            DensityPair::Pair(p, q) if p.dim() != q.dim() => {
                return mismatch("the two densities differ in dimension")
            }
            DensityPair::Mi { x, y, layout, .. } => {
                if x.dim() != layout.x_dim || y.dim() != layout.y_dim || layout.dim() != self.dim() {
                    return mismatch("marginal dimensions disagree with the layout");
                }
            }
            DensityPair::CondMi { xz, yz, z, layout, .. }
                if xz.dim() != layout.x_dim + layout.z_dim
                    || yz.dim() != layout.y_dim + layout.z_dim
                    || z.dim() != layout.z_dim
                    || layout.dim() != self.dim() =>
            {
                return mismatch("marginal dimensions disagree with the layout");
            }
            _ => {}
        }
        if spec.kind.is_conditional() && spec.z_dim >= self.dim() {
            return mismatch("conditioning block does not fit");
        }
        Ok(())
    }
}

/// First (`f`, `p_XZ`, or the only) argument versus the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    First,
    Second,
}

/// Quadrature grids over the free blocks of a conditional MI.
#[derive(Debug, Clone)]
struct PartialGrids {
    x: GridSpec,
    y: GridSpec,
    xy: GridSpec,
}

impl PartialGrids {
    fn new(layout: &Layout, grid: &GridSpec) -> Result<Self> {
        Ok(Self {
            x: grid.with_dim(layout.x_dim)?,
            y: grid.with_dim(layout.y_dim)?,
            xy: grid.with_dim(layout.x_dim + layout.y_dim)?,
        })
    }
}

/// The four ratio terms of the conditional Tsallis MI influence function at
/// `v = (x, y, z)`, with `nu = p^a p_XZ^b p_YZ^b p_Z^(a-1)` and `b = 1 - a`:
///
/// * `A = nu / p` at `v`;
/// * `B_X = int nu(x, y', z) dy' / p_XZ(x, z)`;
/// * `B_Y = int nu(x', y, z) dx' / p_YZ(y, z)`;
/// * `C = int int nu(x', y', z) dx' dy' / p_Z(z)`.
///
/// Each has expectation `I = int nu` under `p`.
#[allow(clippy::too_many_arguments)]
fn cond_mi_terms(
    joint: &dyn Density,
    xz: &dyn Density,
    yz: &dyn Density,
    zd: &dyn Density,
    cols: &BlockCols,
    grids: &PartialGrids,
    alpha: f64,
    v: &[f64],
) -> [f64; 4] {
    let parts = CondMiParts { joint, xz, yz, zd, cols, grids, alpha };
    parts.combine(v, parts.int_y(v), parts.int_x(v), parts.int_xy(v))
}

/// The densities of a conditional MI and the pieces of [`cond_mi_terms`],
/// split by which blocks of `v` they depend on.
struct CondMiParts<'a> {
    joint: &'a dyn Density,
    xz: &'a dyn Density,
    yz: &'a dyn Density,
    zd: &'a dyn Density,
    cols: &'a BlockCols,
    grids: &'a PartialGrids,
    alpha: f64,
}

impl CondMiParts<'_> {
    /// `p_XZ(x', z)^b` at every node of the x grid (depends on `z` only).
    fn xz_nodes(&self, v: &[f64]) -> Vec<f64> {
        let l = self.cols.layout;
        let (dx, dy) = (l.x_dim, l.y_dim);
        let mut p = [0.0; 8];
        p[dx..dx + l.z_dim].copy_from_slice(&v[dx + dy..]);
        (0..self.grids.x.len())
            .map(|k| {
                self.grids.x.node(k, &mut p[..dx]);
                fl(self.xz.density(&p[..dx + l.z_dim])).powf(1.0 - self.alpha)
            })
            .collect()
    }

    fn yz_nodes(&self, v: &[f64]) -> Vec<f64> {
        let l = self.cols.layout;
        let (dx, dy) = (l.x_dim, l.y_dim);
        let mut p = [0.0; 8];
        p[dy..dy + l.z_dim].copy_from_slice(&v[dx + dy..]);
        (0..self.grids.y.len())
            .map(|k| {
                self.grids.y.node(k, &mut p[..dy]);
                fl(self.yz.density(&p[..dy + l.z_dim])).powf(1.0 - self.alpha)
            })
            .collect()
    }

    /// `int p(x, y', z)^a p_YZ(y', z)^b dy'`; depends on `(x, z)`.
    fn int_y(&self, v: &[f64]) -> f64 {
        let l = self.cols.layout;
        let (dx, dy, d) = (l.x_dim, l.y_dim, l.dim());
        let pyz = self.yz_nodes(v);
        let mut w = [0.0; 8];
        w[..d].copy_from_slice(v);
        let vals: Vec<f64> = (0..pyz.len())
            .map(|k| {
                self.grids.y.node(k, &mut w[dx..dx + dy]);
                fl(self.joint.density(&w[..d])).powf(self.alpha) * pyz[k]
            })
            .collect();
        self.grids.y.integrate_values(&vals)
    }

    /// `int p(x', y, z)^a p_XZ(x', z)^b dx'`; depends on `(y, z)`.
    fn int_x(&self, v: &[f64]) -> f64 {
        let d = self.cols.layout.dim();
        let dx = self.cols.layout.x_dim;
        let pxz = self.xz_nodes(v);
        let mut w = [0.0; 8];
        w[..d].copy_from_slice(v);
        let vals: Vec<f64> = (0..pxz.len())
            .map(|k| {
                self.grids.x.node(k, &mut w[..dx]);
                fl(self.joint.density(&w[..d])).powf(self.alpha) * pxz[k]
            })
            .collect();
        self.grids.x.integrate_values(&vals)
    }

    /// `int int p^a p_XZ^b p_YZ^b dx' dy'`; depends on `z`.
    fn int_xy(&self, v: &[f64]) -> f64 {
        let l = self.cols.layout;
        let (dx, dy, d) = (l.x_dim, l.y_dim, l.dim());
        let (pxz, pyz) = (self.xz_nodes(v), self.yz_nodes(v));
        let mut w = [0.0; 8];
        w[..d].copy_from_slice(v);
        let mut vals = vec![0.0; pxz.len() * pyz.len()];
        for (kx, &bx) in pxz.iter().enumerate() {
            self.grids.x.node(kx, &mut w[..dx]);
            for (ky, &by) in pyz.iter().enumerate() {
                self.grids.y.node(ky, &mut w[dx..dx + dy]);
                vals[kx * pyz.len() + ky] = fl(self.joint.density(&w[..d])).powf(self.alpha) * bx * by;
            }
        }
        self.grids.xy.integrate_values(&vals)
    }

    fn combine(&self, v: &[f64], int_y: f64, int_x: f64, int_xy: f64) -> [f64; 4] {
        let (alpha, beta) = (self.alpha, 1.0 - self.alpha);
        let mut b = [0.0; 8];
        let pz = fl(self.zd.density(gather(v, &self.cols.z, &mut b)));
        let pxz = fl(self.xz.density(gather(v, &self.cols.xz, &mut b)));
        let pyz = fl(self.yz.density(gather(v, &self.cols.yz, &mut b)));
        let p = fl(self.joint.density(v));
        let a = p.powf(alpha - 1.0) * pxz.powf(beta) * pyz.powf(beta) * pz.powf(alpha - 1.0);
        let bx = pxz.powf(beta - 1.0) * pz.powf(alpha - 1.0) * int_y;
        let by = pyz.powf(beta - 1.0) * pz.powf(alpha - 1.0) * int_x;
        let c = pz.powf(alpha - 2.0) * int_xy;
        [a, bx, by, c]
    }

    /// The terms at every node of `grid` (a tensor grid over `[X | Y | Z]`
    /// with the same axis nodes as the partial grids), computing each partial
    /// integral once per distinct argument.
    fn grid_terms(&self, grid: &GridSpec) -> Vec<[f64; 4]> {
        let l = self.cols.layout;
        let m = grid.points_per_axis();
        let (nx, ny, nz) = (self.grids.x.len(), self.grids.y.len(), m.pow(l.z_dim as u32));
        let d = l.dim();
        let point = |xk: usize, yk: usize, zk: usize| {
            let mut v = [0.0; 8];
            grid.node((xk * ny + yk) * nz + zk, &mut v[..d]);
            v
        };
        let iy = par::map_indexed(nx * nz, |k| self.int_y(&point(k / nz, 0, k % nz)[..d]));
        let ix = par::map_indexed(ny * nz, |k| self.int_x(&point(0, k / nz, k % nz)[..d]));
        let ixy = par::map_indexed(nz, |zk| self.int_xy(&point(0, 0, zk)[..d]));
        par::map_indexed(grid.len(), |k| {
            let (zk, yk, xk) = (k % nz, (k / nz) % ny, k / (nz * ny));
            let v = point(xk, yk, zk);
            self.combine(&v[..d], iy[xk * nz + zk], ix[yk * nz + zk], ixy[zk])
        })
    }
}

fn cond_mi_core(terms: [f64; 4], alpha: f64) -> f64 {
    let beta = 1.0 - alpha;
    let [a, bx, by, c] = terms;
    (alpha * a + beta * bx + beta * by + (alpha - 1.0) * c) / (alpha - 1.0)
}

/// A functional evaluated on fixed densities: its value and its influence
/// function(s).
#[derive(Clone)]
pub struct Influence<'a> {
    spec: FunctionalSpec,
    dens: DensityPair<'a>,
    value: f64,
    /// `S`, `I` or `C` (the inner integral), where the kind has one.
    inner: f64,
    off_f: f64,
    off_g: f64,
    cols: Option<BlockCols>,
    partial: Option<PartialGrids>,
}

impl<'a> Influence<'a> {
    /// Computes `T` and the influence offsets by quadrature on `grid`.
    pub fn new(spec: &FunctionalSpec, dens: DensityPair<'a>, grid: &GridSpec) -> Result<Self> {
        dens.check(spec, grid)?;
        let alpha = spec.a();
        let mut inf = Self {
            spec: spec.clone(),
            dens,
            value: 0.0,
            inner: f64::NAN,
            off_f: 0.0,
            off_g: 0.0,
            cols: None,
            partial: None,
        };
        let int = |v: Vec<f64>| grid.integrate_values(&v);
        match dens {
            DensityPair::Single(p) => {
                let pv: Vec<f64> = p.grid_values(grid).into_iter().map(fl).collect();
                match spec.kind {
                    Kind::ShannonEntropy => {
                        inf.value = -int(pv.iter().map(|&p| p * p.ln()).collect());
                        inf.off_f = inf.value;
                    }
                    Kind::TsallisEntropy => {
                        let i = int(pv.iter().map(|&p| p.powf(alpha)).collect());
                        inf.inner = i;
                        inf.value = (1.0 - i) / (alpha - 1.0);
                        inf.off_f = -alpha / (alpha - 1.0) * i;
                    }
                    Kind::RenyiEntropy => {
                        let i = int(pv.iter().map(|&p| p.powf(alpha)).collect());
                        inf.inner = i;
                        inf.value = i.ln() / (1.0 - alpha);
                        inf.off_f = -alpha / (alpha - 1.0);
                    }
                    _ => unreachable!("checked by DensityPair::check"),
                }
            }
            DensityPair::Pair(p, q) => {
                let pv: Vec<f64> = p.grid_values(grid).into_iter().map(fl).collect();
                let qv: Vec<f64> = q.grid_values(grid).into_iter().map(fl).collect();
                let zip = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
                    pv.iter().zip(&qv).map(|(&p, &q)| f(p, q)).collect()
                };
                match spec.kind.base() {
                    Kind::L2Divergence => {
                        inf.value = int(zip(&|p, q| (p - q) * (p - q)));
                        inf.off_f = 2.0 * int(zip(&|p, q| (p - q) * p));
                        inf.off_g = -2.0 * int(zip(&|p, q| (p - q) * q));
                    }
                    Kind::HellingerDivergence => {
                        let s = int(zip(&|p, q| (p * q).sqrt()));
                        inf.inner = s;
                        inf.value = 2.0 - 2.0 * s;
                        inf.off_f = -s;
                        inf.off_g = -s;
                    }
                    Kind::ChiSquaredDivergence => {
                        let c = int(zip(&|p, q| q * q / p));
                        inf.inner = c;
                        inf.value = c - 1.0;
                        inf.off_f = -c;
                        inf.off_g = 2.0 * c;
                    }
                    Kind::FDivergence => {
                        let (phi, dphi) = spec.phi.clone().expect("validated");
                        inf.value = int(zip(&|p, q| phi(p / q) * q));
                        inf.off_f = int(zip(&|p, q| dphi(p / q) * p));
                        inf.off_g = int(zip(&|p, q| {
                            let r = p / q;
                            (phi(r) - r * dphi(r)) * q
                        }));
                    }
                    Kind::KlDivergence => {
                        inf.value = int(zip(&|p, q| p * (p / q).ln()));
                        inf.off_f = inf.value;
                        inf.off_g = -1.0;
                    }
                    Kind::TsallisDivergence => {
                        let s = int(zip(&|p, q| p.powf(alpha) * q.powf(1.0 - alpha)));
                        inf.inner = s;
                        inf.value = (s - 1.0) / (alpha - 1.0);
                        inf.off_f = alpha / (alpha - 1.0) * s;
                        inf.off_g = -s;
                    }
                    Kind::RenyiDivergence => {
                        let s = int(zip(&|p, q| p.powf(alpha) * q.powf(1.0 - alpha)));
                        inf.inner = s;
                        inf.value = s.ln() / (alpha - 1.0);
                        inf.off_f = alpha / (alpha - 1.0);
                        inf.off_g = -1.0;
                    }
                    Kind::PowerIntegral => {
                        let (a, b) = spec.exponents.expect("validated");
                        let s = int(zip(&|p, q| p.powf(a) * q.powf(b)));
                        inf.inner = s;
                        inf.value = s;
                        inf.off_f = a * s;
                        inf.off_g = b * s;
                    }
                    _ => unreachable!("checked by DensityPair::check"),
                }
            }
            DensityPair::Mi { joint, x, y, layout } => {
                let cols = BlockCols::new(layout);
                let vals = grid.values(|v| {
                    let mut b = [0.0; 8];
                    let p = fl(joint.density(v));
                    let px = fl(x.density(gather(v, &cols.x, &mut b)));
                    let py = fl(y.density(gather(v, &cols.y, &mut b)));
                    p * (p / (px * py)).ln()
                });
                inf.value = grid.integrate_values(&vals);
                inf.off_f = inf.value;
                inf.cols = Some(cols);
            }
            DensityPair::CondMi { joint, xz, yz, z, layout } => {
                let cols = BlockCols::new(layout);
                let beta = 1.0 - alpha;
                let vals = grid.values(|v| {
                    let mut b = [0.0; 8];
                    let p = fl(joint.density(v));
                    let pxz = fl(xz.density(gather(v, &cols.xz, &mut b)));
                    let pyz = fl(yz.density(gather(v, &cols.yz, &mut b)));
                    let pz = fl(z.density(gather(v, &cols.z, &mut b)));
                    p.powf(alpha) * pxz.powf(beta) * pyz.powf(beta) * pz.powf(alpha - 1.0)
                });
                let i = grid.integrate_values(&vals);
                inf.inner = i;
                inf.value = (i - 1.0) / (alpha - 1.0);
                inf.off_f = i / (alpha - 1.0);
                inf.partial = Some(PartialGrids::new(&layout, grid)?);
                inf.cols = Some(cols);
            }
        }
        Ok(inf)
    }

    /// `T` on the densities.
    pub fn value(&self) -> f64 {
        self.value
    }

    /// The inner integral (`int p^a`, `int p^a q^b`, `int q^2/p`, ...) where
    /// the kind has one, else NaN.
    pub fn inner(&self) -> f64 {
        self.inner
    }

    pub fn at(&self, which: Which, x: &[f64]) -> f64 {
        match which {
            Which::First => self.first(x),
            Which::Second => self.second(x),
        }
    }

    /// Influence with respect to the first (or only) density, at `x`.
    pub fn first(&self, x: &[f64]) -> f64 {
        self.core_first(x) - self.off_f
    }

    /// [`Influence::first`] at every node of `grid`, in node order.
    pub fn first_values(&self, grid: &GridSpec) -> Vec<f64> {
        if let (DensityPair::CondMi { joint, xz, yz, z, layout }, Some(cols), Some(grids)) =
            (self.dens, self.cols.as_ref(), self.partial.as_ref())
        {
            let same_nodes = grid.dim() == layout.dim()
                && grid.with_dim(layout.x_dim).is_ok_and(|g| g == grids.x)
                && grid.with_dim(layout.y_dim).is_ok_and(|g| g == grids.y);
            if same_nodes {
                let alpha = self.spec.a();
                let parts = CondMiParts { joint, xz, yz, zd: z, cols, grids, alpha };
                return parts
                    .grid_terms(grid)
                    .into_iter()
                    .map(|t| cond_mi_core(t, alpha) - self.off_f)
                    .collect();
            }
        }
        grid.values(|x| self.first(x))
    }

    /// Influence with respect to the second density, at `y`; zero for
    /// single-density kinds.
    pub fn second(&self, y: &[f64]) -> f64 {
        match self.dens {
            DensityPair::Pair(..) => self.core_second(y) - self.off_g,
            _ => 0.0,
        }
    }

    fn core_first(&self, x: &[f64]) -> f64 {
        let alpha = self.spec.a();
        match self.dens {
            DensityPair::Single(p) => {
                let p = fl(p.density(x));
                match self.spec.kind {
                    Kind::ShannonEntropy => -p.ln(),
                    Kind::TsallisEntropy => -alpha / (alpha - 1.0) * p.powf(alpha - 1.0),
                    _ => -alpha / (alpha - 1.0) * p.powf(alpha - 1.0) / self.inner,
                }
            }
            DensityPair::Pair(p, q) => self.pair_core_f(fl(p.density(x)), fl(q.density(x))),
            DensityPair::Mi { joint, x: px, y: py, .. } => {
                let cols = self.cols.as_ref().expect("set for MI");
                let mut b = [0.0; 8];
                let p = fl(joint.density(x));
                let a = fl(px.density(gather(x, &cols.x, &mut b)));
                let c = fl(py.density(gather(x, &cols.y, &mut b)));
                p.ln() - a.ln() - c.ln()
            }
            DensityPair::CondMi { joint, xz, yz, z, .. } => {
                let cols = self.cols.as_ref().expect("set for MI");
                let grids = self.partial.as_ref().expect("set for MI");
                cond_mi_core(cond_mi_terms(joint, xz, yz, z, cols, grids, alpha, x), alpha)
            }
        }
    }

    fn core_second(&self, y: &[f64]) -> f64 {
        match self.dens {
            DensityPair::Pair(p, q) => self.pair_core_g(fl(p.density(y)), fl(q.density(y))),
            _ => 0.0,
        }
    }

    #[inline]
    fn pair_core_f(&self, p: f64, q: f64) -> f64 {
        let alpha = self.spec.a();
        match self.spec.kind.base() {
            Kind::L2Divergence => 2.0 * (p - q),
            Kind::HellingerDivergence => -(q / p).sqrt(),
            Kind::ChiSquaredDivergence => -(q / p) * (q / p),
            Kind::FDivergence => (self.spec.phi.as_ref().expect("validated").1)(p / q),
            Kind::KlDivergence => (p / q).ln(),
            Kind::TsallisDivergence => alpha / (alpha - 1.0) * (p / q).powf(alpha - 1.0),
            Kind::RenyiDivergence => {
                alpha / (alpha - 1.0) * (p / q).powf(alpha - 1.0) / self.inner
            }
            Kind::PowerIntegral => {
                let (a, b) = self.spec.exponents.expect("validated");
                a * (q / p).powf(b)
            }
            _ => unreachable!(),
        }
    }

    #[inline]
    fn pair_core_g(&self, p: f64, q: f64) -> f64 {
        let alpha = self.spec.a();
        match self.spec.kind.base() {
            Kind::L2Divergence => -2.0 * (p - q),
            Kind::HellingerDivergence => -(p / q).sqrt(),
            Kind::ChiSquaredDivergence => 2.0 * q / p,
            Kind::FDivergence => {
                let (phi, dphi) = self.spec.phi.as_ref().expect("validated");
                let r = p / q;
                phi(r) - r * dphi(r)
            }
            Kind::KlDivergence => -p / q,
            Kind::TsallisDivergence => -(p / q).powf(alpha),
            Kind::RenyiDivergence => -(p / q).powf(alpha) / self.inner,
            Kind::PowerIntegral => {
                let (a, b) = self.spec.exponents.expect("validated");
                b * (p / q).powf(a)
            }
            _ => unreachable!(),
        }
    }
}

/// Plug-in value `T(densities)` by quadrature.
pub fn plugin_value(spec: &FunctionalSpec, dens: &DensityPair<'_>, grid: &GridSpec) -> Result<f64> {
    Ok(Influence::new(spec, *dens, grid)?.value())
}

/// One influence-function value. Rebuilds the quadrature offsets on every
/// call; use [`Influence`] directly for repeated evaluation.
pub fn influence(
    spec: &FunctionalSpec,
    which: Which,
    x: &[f64],
    dens: &DensityPair<'_>,
    grid: &GridSpec,
) -> Result<f64> {
    let inf = Influence::new(spec, *dens, grid)?;
    if x.len() != dens.dim() {
        return Err(Error::DimensionMismatch(format!(
            "point has {} coordinates, densities are {}-dimensional",
            x.len(),
            dens.dim()
        )));
    }
    Ok(inf.at(which, x))
}

/// Pointwise convex combination `(1 - t) a + t b`.
struct Blend<'a> {
    a: &'a dyn Density,
    b: &'a dyn Density,
    t: f64,
}

impl Density for Blend<'_> {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn density(&self, x: &[f64]) -> f64 {
        let va = self.a.density(x);
        va + self.t * (self.b.density(x) - va)
    }
}

/// Second-order remainder of the von Mises expansion along `p -> q`:
/// `T(p + t(q - p)) - T(p) - t * sum_k int psi_k(x; p) (q_k - p_k)(x) dx`.
/// It is `O(t^2)` when the influence functions are correct.
pub fn vme_residual(
    spec: &FunctionalSpec,
    p: &DensityPair<'_>,
    q: &DensityPair<'_>,
    t: f64,
    grid: &GridSpec,
) -> Result<f64> {
    if !(t > 0.0 && t <= 0.1) {
        return Err(Error::InvalidArgument(format!(
            "perturbation size must be in (0, 0.1], got {t}"
        )));
    }
    let inf_p = Influence::new(spec, *p, grid)?;
    Influence::new(spec, *q, grid)?;
    let t_p = inf_p.value();
    let (t_mix, linear) = match (*p, *q) {
        (DensityPair::Single(pa), DensityPair::Single(qa)) => {
            let m = Blend { a: pa, b: qa, t };
            let tm = plugin_value(spec, &DensityPair::Single(&m), grid)?;
            let lin = grid.integrate_values(&grid.values(|x| {
                inf_p.first(x) * (qa.density(x) - pa.density(x))
            }));
            (tm, lin)
        }
        (DensityPair::Pair(pa, pb), DensityPair::Pair(qa, qb)) => {
            let ma = Blend { a: pa, b: qa, t };
            let mb = Blend { a: pb, b: qb, t };
            let tm = plugin_value(spec, &DensityPair::Pair(&ma, &mb), grid)?;
            let lin = grid.integrate_values(&grid.values(|x| {
                inf_p.first(x) * (qa.density(x) - pa.density(x))
                    + inf_p.second(x) * (qb.density(x) - pb.density(x))
            }));
            (tm, lin)
        }
        (
            DensityPair::Mi { joint: pj, x: px, y: py, layout },
            DensityPair::Mi { joint: qj, x: qx, y: qy, .. },
        ) => {
            let mj = Blend { a: pj, b: qj, t };
            let mx = Blend { a: px, b: qx, t };
            let my = Blend { a: py, b: qy, t };
            let tm = plugin_value(
                spec,
                &DensityPair::Mi { joint: &mj, x: &mx, y: &my, layout },
                grid,
            )?;
            let lin = grid.integrate_values(&grid.values(|x| {
                inf_p.first(x) * (qj.density(x) - pj.density(x))
            }));
            (tm, lin)
        }
        (
            DensityPair::CondMi { joint: pj, xz: pxz, yz: pyz, z: pz, layout },
            DensityPair::CondMi { joint: qj, xz: qxz, yz: qyz, z: qz, .. },
        ) => {
            let mj = Blend { a: pj, b: qj, t };
            let mxz = Blend { a: pxz, b: qxz, t };
            let myz = Blend { a: pyz, b: qyz, t };
            let mz = Blend { a: pz, b: qz, t };
            let tm = plugin_value(
                spec,
                &DensityPair::CondMi { joint: &mj, xz: &mxz, yz: &myz, z: &mz, layout },
                grid,
            )?;
            let psi = inf_p.first_values(grid);
            let diff = grid.values(|x| qj.density(x) - pj.density(x));
            let prod: Vec<f64> = psi.iter().zip(&diff).map(|(a, b)| a * b).collect();
            (tm, grid.integrate_values(&prod))
        }
        _ => {
            return Err(Error::DimensionMismatch(
                "p and q must have the same shape".into(),
            ))
        }
    };
    Ok(t_mix - t_p - t * linear)
}

/// Fitted models an estimator works with.
#[derive(Clone, Copy)]
pub enum Fitted<'a> {
    Single(&'a KdeModel),
    Pair(&'a KdeModel, &'a KdeModel),
    /// Joint model plus marginal models in [`Layout::marginal_columns`] order,
    /// all fitted on the same rows.
    Blocks {
        joint: &'a KdeModel,
        parts: &'a [KdeModel],
        layout: Layout,
    },
}

impl<'a> Fitted<'a> {
    pub fn densities(&self) -> DensityPair<'a> {
        match *self {
            Fitted::Single(p) => DensityPair::Single(p),
            Fitted::Pair(p, q) => DensityPair::Pair(p, q),
            Fitted::Blocks { joint, parts, layout } => DensityPair::with_marginals(
                joint,
                parts.iter().map(|m| m as &dyn Density).collect(),
                layout,
            ),
        }
    }

    /// Summands of the leave-one-out average: `max(n, m)` for two sample
    /// sets, `n` otherwise.
    pub fn loo_count(&self) -> usize {
        match *self {
            Fitted::Single(p) => p.len(),
            Fitted::Pair(p, q) => p.len().max(q.len()),
            Fitted::Blocks { joint, .. } => joint.len(),
        }
    }

    /// Sample indices used by summand `i` under cycling.
    pub fn cycle(&self, i: usize) -> (usize, usize) {
        match *self {
            Fitted::Pair(p, q) => (i % p.len(), i % q.len()),
            _ => (i, i),
        }
    }
}

/// How the leave-one-out rows evaluate the *other* sample's density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum CrossDensity {
    /// Own sample leave-one-out, other sample full (`p_-i(X_i) / q(X_i)`).
    #[default]
    Full,
    /// Both densities leave their cycled point out, which makes each summand
    /// exactly `T(p_-i, q_-j) + psi_f(X_i) + psi_g(Y_j)`.
    LeaveOut,
}

/// Precomputed state for the closed-form leave-one-out summands.
pub struct LooTerms<'a> {
    spec: FunctionalSpec,
    fitted: Fitted<'a>,
    cross: CrossDensity,
    /// Per-summand integrals (`int p_-i^a` or `int (p_-i - q)^2`).
    integrals: Vec<f64>,
    cols: Option<BlockCols>,
    partial: Option<PartialGrids>,
}

impl<'a> LooTerms<'a> {
    pub fn new(
        spec: &FunctionalSpec,
        fitted: Fitted<'a>,
        grid: &GridSpec,
        cross: CrossDensity,
    ) -> Result<Self> {
        fitted.densities().check(spec, grid)?;
        let cross = match spec.kind {
            // the power-integral estimator is defined with both densities
            // left out, and the Renyi divergence passes through it
            Kind::PowerIntegral | Kind::RenyiDivergence => CrossDensity::LeaveOut,
            _ => cross,
        };
        let mut terms = Self {
            spec: spec.clone(),
            fitted,
            cross,
            integrals: Vec::new(),
            cols: None,
            partial: None,
        };
        match (spec.kind, fitted) {
            (Kind::TsallisEntropy | Kind::RenyiEntropy, Fitted::Single(p)) => {
                let cache = LooGridCache::new(p, grid)?;
                let pow = LooPowerIntegrals::new(&cache, spec.a());
                terms.integrals = par::map_tasks(p.len(), |i| pow.get(i))
                    .into_iter()
                    .collect::<Result<_>>()?;
            }
            (Kind::L2Divergence, Fitted::Pair(p, q)) => {
                terms.integrals = l2_loo_integrals(p, q, grid, cross, fitted)?;
            }
            (Kind::CondTsallisMi, Fitted::Blocks { layout, .. }) => {
                terms.cols = Some(BlockCols::new(layout));
                terms.partial = Some(PartialGrids::new(&layout, grid)?);
            }
            (Kind::ShannonMi, Fitted::Blocks { layout, .. }) => {
                terms.cols = Some(BlockCols::new(layout));
            }
            _ => {}
        }
        Ok(terms)
    }

    /// Number of summands.
    pub fn len(&self) -> usize {
        self.fitted.loo_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cross_density(&self) -> CrossDensity {
        self.cross
    }

    /// The `i`-th summand of the closed-form estimator.
    pub fn term(&self, i: usize) -> Result<f64> {
        if i >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.len(),
            });
        }
        let alpha = self.spec.a();
        match self.fitted {
            Fitted::Single(p) => {
                let pi = p.eval_loo(i)?;
                Ok(match self.spec.kind {
                    Kind::ShannonEntropy => -pi.ln(),
                    Kind::TsallisEntropy => {
                        1.0 / (alpha - 1.0) + self.integrals[i]
                            - alpha / (alpha - 1.0) * pi.powf(alpha - 1.0)
                    }
                    // summand of the inner integral; see `finish`
                    Kind::RenyiEntropy => {
                        (1.0 - alpha) * self.integrals[i] + alpha * pi.powf(alpha - 1.0)
                    }
                    _ => unreachable!(),
                })
            }
            Fitted::Pair(p, q) => {
                let (ix, iy) = self.fitted.cycle(i);
                let x = p.samples().row(ix);
                let y = q.samples().row(iy);
                let px = p.eval_loo(ix)?;
                let qy = q.eval_loo(iy)?;
                let (qx, py) = match self.cross {
                    CrossDensity::Full => (q.density(x), p.density(y)),
                    CrossDensity::LeaveOut => (q.eval_loo_at(iy, x)?, p.eval_loo_at(ix, y)?),
                };
                Ok(self.pair_term(i, px, qx, py, qy))
            }
            Fitted::Blocks { joint, parts, .. } => {
                let cols = self.cols.as_ref().expect("set for MI");
                match self.spec.kind {
                    Kind::ShannonMi => Ok(joint.eval_loo(i)?.ln()
                        - parts[0].eval_loo(i)?.ln()
                        - parts[1].eval_loo(i)?.ln()),
                    _ => {
                        let v = joint.samples().row(i);
                        let views = (
                            joint.loo_view(i)?,
                            parts[0].loo_view(i)?,
                            parts[1].loo_view(i)?,
                            parts[2].loo_view(i)?,
                        );
                        let grids = self.partial.as_ref().expect("set for MI");
                        let t = cond_mi_terms(
                            &views.0, &views.1, &views.2, &views.3, cols, grids, alpha, v,
                        );
                        Ok(1.0 / (1.0 - alpha) + cond_mi_core(t, alpha))
                    }
                }
            }
        }
    }

    fn pair_term(&self, i: usize, px: f64, qx: f64, py: f64, qy: f64) -> f64 {
        let alpha = self.spec.a();
        match self.spec.kind.base() {
            Kind::L2Divergence => 2.0 * (px - qx) - 2.0 * (py - qy) - self.integrals[i],
            Kind::HellingerDivergence => 2.0 - (qx / px).sqrt() - (py / qy).sqrt(),
            Kind::ChiSquaredDivergence => -1.0 - (qx / px) * (qx / px) + 2.0 * qy / py,
            Kind::FDivergence => {
                let (phi, dphi) = self.spec.phi.as_ref().expect("validated");
                let ry = py / qy;
                dphi(px / qx) + phi(ry) - ry * dphi(ry)
            }
            Kind::KlDivergence => 1.0 + (px / qx).ln() - py / qy,
            Kind::TsallisDivergence => {
                1.0 / (1.0 - alpha) + alpha / (alpha - 1.0) * (px / qx).powf(alpha - 1.0)
                    - (py / qy).powf(alpha)
            }
            // summand of S(alpha, 1 - alpha); see `finish`
            Kind::RenyiDivergence => {
                alpha * (qx / px).powf(1.0 - alpha) + (1.0 - alpha) * (py / qy).powf(alpha)
            }
            Kind::PowerIntegral => {
                let (a, b) = self.spec.exponents.expect("validated");
                a * (qx / px).powf(b) + b * (py / qy).powf(a)
            }
            _ => unreachable!(),
        }
    }

    /// Maps the mean summand to the estimate (identity except for the Renyi
    /// kinds, which pass an estimated inner integral through the logarithm).
    pub fn finish(&self, mean: f64) -> f64 {
        let alpha = self.spec.a();
        match self.spec.kind {
            Kind::RenyiEntropy => mean.ln() / (1.0 - alpha),
            Kind::RenyiDivergence => mean.ln() / (alpha - 1.0),
            _ => mean,
        }
    }

    /// All summands, in index order.
    pub fn all(&self) -> Result<Vec<f64>> {
        par::map_tasks(self.len(), |i| self.term(i)).into_iter().collect()
    }
}

/// `int (p_-i - q_c)^2` for every summand, via downdate caches on `grid`.
fn l2_loo_integrals(
    p: &KdeModel,
    q: &KdeModel,
    grid: &GridSpec,
    cross: CrossDensity,
    fitted: Fitted<'_>,
) -> Result<Vec<f64>> {
    let cp = LooGridCache::new(p, grid)?;
    let cq = LooGridCache::new(q, grid)?;
    let a = cp.rescaled_values();
    let b = match cross {
        CrossDensity::Full => cq.full_values(),
        CrossDensity::LeaveOut => cq.rescaled_values(),
    };
    let base_sq: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).collect();
    let base = grid.integrate_values(&base_sq);
    par::map_tasks(fitted.loo_count(), |i| {
        let (ix, iy) = fitted.cycle(i);
        let sp = cp.loo_support(ix)?;
        let sq = match cross {
            CrossDensity::Full => Vec::new(),
            CrossDensity::LeaveOut => cq.loo_support(iy)?,
        };
        let mut delta = Vec::with_capacity(sp.len() + sq.len());
        let (mut u, mut v) = (0, 0);
        while u < sp.len() || v < sq.len() {
            let ku = sp.get(u).map_or(usize::MAX, |e| e.0);
            let kv = sq.get(v).map_or(usize::MAX, |e| e.0);
            let k = ku.min(kv);
            let av = if ku == k {
                u += 1;
                sp[u - 1].1
            } else {
                a[k]
            };
            let bv = if kv == k {
                v += 1;
                sq[v - 1].1
            } else {
                b[k]
            };
            delta.push(grid.weight(k) * ((av - bv) * (av - bv) - base_sq[k]));
        }
        Ok(base + par::pairwise_sum(&delta))
    })
    .into_iter()
    .collect()
}

/// Summand `i` assembled generically as `T(p_-i, q_-j) + psi_f(X_i; ...) +
/// psi_g(Y_j; ...)` with every density leaving its cycled point out, all
/// integrals by quadrature on `grid`. Slow; serves as a reference for the
/// closed forms.
pub fn generic_loo_term(
    spec: &FunctionalSpec,
    fitted: Fitted<'_>,
    i: usize,
    grid: &GridSpec,
) -> Result<f64> {
    if i >= fitted.loo_count() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: fitted.loo_count(),
        });
    }
    match fitted {
        Fitted::Single(p) => {
            let v = p.loo_view(i)?;
            let inf = Influence::new(spec, DensityPair::Single(&v), grid)?;
            Ok(inf.value() + inf.first(p.samples().row(i)))
        }
        Fitted::Pair(p, q) => {
            let (ix, iy) = fitted.cycle(i);
            let (vp, vq) = (p.loo_view(ix)?, q.loo_view(iy)?);
            let inf = Influence::new(spec, DensityPair::Pair(&vp, &vq), grid)?;
            Ok(inf.value() + inf.first(p.samples().row(ix)) + inf.second(q.samples().row(iy)))
        }
        Fitted::Blocks { joint, parts, layout } => {
            let vj = joint.loo_view(i)?;
            let vparts = parts.iter().map(|m| m.loo_view(i)).collect::<Result<Vec<_>>>()?;
            let dens = DensityPair::with_marginals(
                &vj,
                vparts.iter().map(|v| v as &dyn Density).collect(),
                layout,
            );
            let inf = Influence::new(spec, dens, grid)?;
            Ok(inf.value() + inf.first(joint.samples().row(i)))
        }
    }
}
