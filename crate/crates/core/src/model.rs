//! Problem data: domain, reaction exponent, potential, initial profile, and
//! the scalar quantities derived from them.
//!
//! The evolving equation is u_t = lap(u) + V(x) |u|^(p-1) u with Dirichlet
//! boundary data and initial state amplitude * profile. The quantity driving
//! all of the asymptotics is the profile-weighted potential
//! profile^(p-1) * V: the reciprocal of its peak sets the leading blow-up
//! time scale, and its maximizer is where blow-up concentrates.

use crate::error::{Error, Result};
use crate::mesh::{build_grid, Grid, GridKind};

/// Shape of the spatial domain.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DomainKind {
    /// The segment [-extent, extent].
    Interval,
    /// The ball of radius `extent`, represented by its radii.
    Ball,
}

/// Domain geometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain {
    pub kind: DomainKind,
    pub extent: f64,
}

impl Domain {
    pub fn grid_kind(&self) -> GridKind {
        match self.kind {
            DomainKind::Interval => GridKind::Interval,
            DomainKind::Ball => GridKind::Radial,
        }
    }

    /// Coordinate range a scan should cover: [-extent, extent] or [0, extent].
    pub fn scan_range(&self) -> (f64, f64) {
        match self.kind {
            DomainKind::Interval => (-self.extent, self.extent),
            DomainKind::Ball => (0.0, self.extent),
        }
    }

    /// Distance from `x` to the nearest Dirichlet boundary point.
    pub fn boundary_distance(&self, x: f64) -> f64 {
        match self.kind {
            DomainKind::Interval => (self.extent - x).min(x + self.extent),
            DomainKind::Ball => self.extent - x,
        }
    }
}

/// Closed-form or tabulated scalar function of the coordinate. Used for both
/// the potential and the initial profile.
#[derive(Clone, Debug, PartialEq)]
pub enum FunctionSpec {
    Constant {
        value: f64,
    },
    /// base + amp * exp(-((x - center)/width)^2)
    GaussianBump {
        base: f64,
        amp: f64,
        center: f64,
        width: f64,
    },
    /// cos(pi x / (2 extent)): positive inside the domain, exactly 0 on the
    /// boundary, peak 1 at the origin.
    CosineCap,
    /// Piecewise-linear data on its own node set; values are clamped to the
    /// end values outside the tabulated range.
    Table {
        nodes: Vec<f64>,
        values: Vec<f64>,
    },
}

impl FunctionSpec {
    /// Evaluate at a coordinate. `domain` supplies the geometry the cosine
    /// cap needs; other variants ignore it.
    pub fn eval(&self, x: f64, domain: &Domain) -> f64 {
        match self {
            FunctionSpec::Constant { value } => *value,
            FunctionSpec::GaussianBump { base, amp, center, width } => {
                let z = (x - center) / width;
                base + amp * (-z * z).exp()
            }
            FunctionSpec::CosineCap => {
                (std::f64::consts::FRAC_PI_2 * x / domain.extent).cos()
            }
            FunctionSpec::Table { nodes, values } => {
                if x <= nodes[0] {
                    return values[0];
                }
                if x >= *nodes.last().unwrap() {
                    return *values.last().unwrap();
                }
                // Partition point: first node strictly above x.
                let j = nodes.partition_point(|&n| n <= x);
                let (x0, x1) = (nodes[j - 1], nodes[j]);
                let t = (x - x0) / (x1 - x0);
                values[j - 1] * (1.0 - t) + values[j] * t
            }
        }
    }

    /// Structural soundness of the spec itself (finite parameters, sorted
    /// table nodes, positive width).
    fn check_well_formed(&self, role: &str) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidProblem(msg));
        match self {
            FunctionSpec::Constant { value } => {
                if !value.is_finite() {
                    return bad(format!("{}: constant value must be finite", role));
                }
            }
            FunctionSpec::GaussianBump { base, amp, center, width } => {
                for (name, v) in [("base", base), ("amp", amp), ("center", center)] {
                    if !v.is_finite() {
                        return bad(format!("{}: {} must be finite", role, name));
                    }
                }
                if !(*width > 0.0) || !width.is_finite() {
                    return bad(format!("{}: width must be positive, got {}", role, width));
                }
            }
            FunctionSpec::CosineCap => {}
            FunctionSpec::Table { nodes, values } => {
                if nodes.len() < 2 || nodes.len() != values.len() {
                    return bad(format!(
                        "{}: table needs >= 2 nodes and matching values ({} nodes, {} values)",
                        role,
                        nodes.len(),
                        values.len()
                    ));
                }
                if nodes.windows(2).any(|w| !(w[1] > w[0])) {
                    return bad(format!("{}: table nodes must be strictly increasing", role));
                }
                if nodes.iter().chain(values).any(|v| !v.is_finite()) {
                    return bad(format!("{}: table entries must be finite", role));
                }
            }
        }
        Ok(())
    }
}

/// Complete description of one evolution problem.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    /// Ambient dimension (1 for intervals).
    pub dim: u32,
    /// Reaction exponent p > 1.
    pub exponent: f64,
    pub domain: Domain,
    /// The potential V multiplying the reaction term.
    pub potential: FunctionSpec,
    /// Initial shape; the initial state is amplitude * profile.
    pub profile: FunctionSpec,
    /// Asserted uniform lower bound for the potential (must be positive).
    pub potential_floor: f64,
}

impl ProblemSpec {
    /// Exponent of the singular rate: sup|u| grows like (T - t)^(-1/(p-1)),
    /// and the same number scales the self-similar change of variables.
    pub fn scaling_exponent(&self) -> f64 {
        1.0 / (self.exponent - 1.0)
    }

    /// Critical Sobolev-type exponent: (dim+2)/(dim-2) for dim >= 3,
    /// unbounded below that.
    pub fn critical_exponent(&self) -> f64 {
        if self.dim >= 3 {
            (self.dim as f64 + 2.0) / (self.dim as f64 - 2.0)
        } else {
            f64::INFINITY
        }
    }

    /// Whether the concentration asymptotics apply (subcritical exponent).
    pub fn is_subcritical(&self) -> bool {
        self.exponent < self.critical_exponent()
    }

    /// Build the solver grid matching the domain geometry.
    pub fn solver_grid(&self, m: usize) -> Result<Grid> {
        build_grid(self.domain.grid_kind(), self.dim, self.domain.extent, m)
    }

    pub fn potential_at(&self, x: f64) -> f64 {
        self.potential.eval(x, &self.domain)
    }

    pub fn profile_at(&self, x: f64) -> f64 {
        self.profile.eval(x, &self.domain)
    }

    /// profile(x)^(p-1) * V(x), the function whose peak rules the asymptotics.
    pub fn weighted_potential_at(&self, x: f64) -> f64 {
        self.profile_at(x).powf(self.exponent - 1.0) * self.potential_at(x)
    }
}

/// One validated hypothesis with its outcome.
#[derive(Clone, Debug)]
pub struct Hypothesis {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Result of checking a problem against the structural hypotheses.
#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub hypotheses: Vec<Hypothesis>,
    /// False when the exponent is supercritical: runs still work but the
    /// concentration checks degrade to "not applicable".
    pub concentration_applicable: bool,
}

/// Check the hard hypotheses (exponent > 1, positive floor, potential above
/// its floor, positive interior profile vanishing on the boundary) and the
/// soft one (subcritical exponent). Hard failures are errors; a supercritical
/// exponent only clears `concentration_applicable`.
pub fn validate_spec(spec: &ProblemSpec, grid: &Grid) -> Result<ValidationReport> {
    if grid.kind != spec.domain.grid_kind() || (grid.extent - spec.domain.extent).abs() > 1e-12 {
        return Err(Error::InvalidArgument(
            "grid geometry does not match the problem domain".into(),
        ));
    }
    spec.potential.check_well_formed("potential")?;
    spec.profile.check_well_formed("profile")?;

    let mut hypotheses = Vec::new();
    let mut push = |name: &'static str, passed: bool, detail: String| {
        hypotheses.push(Hypothesis { name, passed, detail });
        passed
    };

    let p_ok = push(
        "exponent_above_one",
        spec.exponent > 1.0 && spec.exponent.is_finite(),
        format!("p = {}", spec.exponent),
    );
    if !p_ok {
        return Err(Error::InvalidProblem(format!(
            "reaction exponent must exceed 1, got {}",
            spec.exponent
        )));
    }

    let floor_ok = push(
        "potential_floor_positive",
        spec.potential_floor > 0.0,
        format!("floor = {}", spec.potential_floor),
    );
    if !floor_ok {
        return Err(Error::InvalidProblem(format!(
            "potential floor must be positive, got {}",
            spec.potential_floor
        )));
    }

    let mut min_potential = f64::INFINITY;
    let mut min_at = grid.nodes[0];
    for &x in &grid.nodes {
        let v = spec.potential_at(x);
        if v < min_potential {
            min_potential = v;
            min_at = x;
        }
    }
    let v_ok = push(
        "potential_above_floor",
        min_potential >= spec.potential_floor,
        format!("min V = {} at x = {}", min_potential, min_at),
    );
    if !v_ok {
        return Err(Error::InvalidProblem(format!(
            "potential drops to {} at x = {}, below the floor {}",
            min_potential, min_at, spec.potential_floor
        )));
    }

    let boundary: Vec<usize> = grid.boundary_indices();
    let mut profile_max = 0.0_f64;
    for &x in &grid.nodes {
        profile_max = profile_max.max(spec.profile_at(x).abs());
    }
    let mut interior_ok = true;
    let mut interior_detail = String::from("profile > 0 at all interior nodes");
    for (i, &x) in grid.nodes.iter().enumerate() {
        if boundary.contains(&i) {
            continue;
        }
        let v = spec.profile_at(x);
        if !(v > 0.0) {
            interior_ok = false;
            interior_detail = format!("profile = {} at interior node x = {}", v, x);
            break;
        }
    }
    push("profile_positive_interior", interior_ok, interior_detail.clone());
    if !interior_ok {
        return Err(Error::InvalidProblem(interior_detail));
    }

    let tol = 1e-12 * (1.0 + profile_max);
    let mut boundary_ok = true;
    let mut boundary_detail = String::from("profile vanishes on the boundary");
    for &i in &boundary {
        let v = spec.profile_at(grid.nodes[i]);
        if v.abs() > tol {
            boundary_ok = false;
            boundary_detail =
                format!("profile = {} at boundary node x = {}", v, grid.nodes[i]);
            break;
        }
    }
    push("profile_zero_on_boundary", boundary_ok, boundary_detail.clone());
    if !boundary_ok {
        return Err(Error::InvalidProblem(boundary_detail));
    }

    let subcritical = spec.is_subcritical();
    push(
        "exponent_subcritical",
        subcritical,
        format!("p = {}, critical = {}", spec.exponent, spec.critical_exponent()),
    );

    Ok(ValidationReport { hypotheses, concentration_applicable: subcritical })
}

/// Reciprocal of the peak of profile^(p-1) * V together with the maximizer,
/// found by a dense left-to-right scan at `refine` times the solver grid
/// resolution (at least 8). Exact ties keep the smallest coordinate.
pub fn blowup_time_scale_refined(
    spec: &ProblemSpec,
    grid: &Grid,
    refine: usize,
) -> Result<(f64, f64)> {
    let refine = refine.max(8);
    let samples = grid.cells() * refine;
    let (lo, hi) = spec.domain.scan_range();
    let step = (hi - lo) / samples as f64;
    let mut best = f64::NEG_INFINITY;
    let mut at = lo;
    for i in 0..=samples {
        let x = if i == samples { hi } else { lo + i as f64 * step };
        let f = spec.weighted_potential_at(x);
        if f > best {
            best = f;
            at = x;
        }
    }
    if !(best > 0.0) || !best.is_finite() {
        return Err(Error::InvalidProblem(format!(
            "profile-weighted potential has non-positive peak {}",
            best
        )));
    }
    Ok((1.0 / best, at))
}

/// [`blowup_time_scale_refined`] at the standard 8x refinement.
pub fn blowup_time_scale(spec: &ProblemSpec, grid: &Grid) -> Result<(f64, f64)> {
    blowup_time_scale_refined(spec, grid, 8)
}

/// Blow-up time of the spatially-frozen reaction equation at the peak:
/// amplitude^(1-p) / ((p-1) * peak of profile^(p-1) V). The sweep margins
/// measure how fast the true time approaches this.
pub fn ode_reference_time(spec: &ProblemSpec, amplitude: f64) -> Result<f64> {
    if !(amplitude > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "amplitude must be positive, got {}",
            amplitude
        )));
    }
    // Fixed dense scan; no solver grid needed for a reference number.
    let samples = 1 << 16;
    let (lo, hi) = spec.domain.scan_range();
    let step = (hi - lo) / samples as f64;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=samples {
        let x = if i == samples { hi } else { lo + i as f64 * step };
        best = best.max(spec.weighted_potential_at(x));
    }
    if !(best > 0.0) || !best.is_finite() {
        return Err(Error::InvalidProblem(format!(
            "profile-weighted potential has non-positive peak {}",
            best
        )));
    }
    let p = spec.exponent;
    Ok(amplitude.powf(1.0 - p) / ((p - 1.0) * best))
}

/// Value the rescaled solution plateaus at when blow-up happens at
/// `location`: ((p-1) V(location))^(-1/(p-1)).
pub fn plateau_constant(spec: &ProblemSpec, location: f64) -> f64 {
    let p = spec.exponent;
    ((p - 1.0) * spec.potential_at(location)).powf(-1.0 / (p - 1.0))
}
