//! Built-in reaction–diffusion problems.
//!
//! Sign convention used everywhere in this crate:
//!
//! ```text
//! u_t = ν Δu + R(u) + f
//! ```
//!
//! A problem written as `u_t − νΔu + g(u) = f` therefore has `R = −g`.

use std::f64::consts::PI;

use crate::error::{PodError, Result};
use crate::fem::{FemSpace, FieldAssembler, PointwiseReaction};
use crate::mesh::BoundaryLayout;

#[derive(Debug, Clone, PartialEq)]
pub enum Reaction {
    /// `R ≡ 0` for a field with the given number of components.
    None(usize),
    /// `R(u) = −u³`, i.e. `g(u) = u³`.
    Cubic,
    /// `R(u, v) = (1 + u²v − 4u, 3u − u²v)`.
    Brusselator,
    /// Brusselator in shifted variables `(ũ, ṽ) = (u − 1, v − 3)`.
    BrusselatorLifted,
}

fn brusselator(u: f64, v: f64, out: &mut [f64]) {
    out[0] = 1.0 + u * u * v - 4.0 * u;
    out[1] = 3.0 * u - u * u * v;
}

fn brusselator_jacobian(u: f64, v: f64, out: &mut [f64]) {
    out[0] = 2.0 * u * v - 4.0;
    out[1] = u * u;
    out[2] = 3.0 - 2.0 * u * v;
    out[3] = -u * u;
}

impl PointwiseReaction for Reaction {
    fn n_components(&self) -> usize {
        match self {
            Self::None(n) => *n,
            Self::Cubic => 1,
            Self::Brusselator | Self::BrusselatorLifted => 2,
        }
    }

    fn eval(&self, u: &[f64], out: &mut [f64]) {
        match self {
            Self::None(_) => out.fill(0.0),
            Self::Cubic => out[0] = -u[0].powi(3),
            Self::Brusselator => brusselator(u[0], u[1], out),
            Self::BrusselatorLifted => brusselator(u[0] + 1.0, u[1] + 3.0, out),
        }
    }

    fn jacobian(&self, u: &[f64], out: &mut [f64]) {
        match self {
            Self::None(_) => out.fill(0.0),
            Self::Cubic => out[0] = -3.0 * u[0] * u[0],
            Self::Brusselator => brusselator_jacobian(u[0], u[1], out),
            Self::BrusselatorLifted => brusselator_jacobian(u[0] + 1.0, u[1] + 3.0, out),
        }
    }
}

impl Reaction {
    pub fn is_zero(&self) -> bool {
        matches!(self, Self::None(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Forcing {
    Zero,
    /// Source that makes `e^{−2νπ²t} sin(πx) sin(πy)` exact for `g(u) = u³`.
    CubicManufactured {
        nu: f64,
    },
    /// Gaussian source `a · exp(−|x − c(t)|² / w²)` whose centre circles the point (½, ½).
    RotatingSource {
        amplitude: f64,
        width: f64,
        radius: f64,
        period: f64,
    },
    /// Already-assembled load `F(t) = Σ_k t^k F_k` on the free dofs.
    DiscretePolynomial(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    Zero,
    /// `sin(πx) sin(πy)` in every component.
    SinSin,
    /// `ũ = a cos(πx/2) cos(πy/2)`, `ṽ = 0`: vanishes on Γ₁ with zero normal derivative on Γ₂.
    BrusselatorBump {
        amplitude: f64,
    },
    /// Explicit free-dof coefficients.
    Coefficients(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub name: String,
    pub nu: f64,
    pub n_components: usize,
    pub reaction: Reaction,
    pub forcing: Forcing,
    pub initial: InitialData,
    pub bc_layout: BoundaryLayout,
    /// Constant added per component to recover the physical field.
    pub lifting: Vec<f64>,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) {
            return Err(PodError::invalid(format!("diffusion must be positive, got {}", self.nu)));
        }
        if self.reaction.n_components() != self.n_components || self.lifting.len() != self.n_components {
            return Err(PodError::invalid("component counts of reaction, lifting and problem differ"));
        }
        if self.bc_layout != BoundaryLayout::BrusselatorMixed && self.lifting.iter().any(|&l| l != 0.0) {
            return Err(PodError::invalid("a nonzero lifting is only meaningful for the mixed layout"));
        }
        Ok(())
    }

    pub fn is_linear(&self) -> bool {
        self.reaction.is_zero()
    }

    pub fn initial_coefficients(&self, space: &FemSpace) -> Result<Vec<f64>> {
        let nc = self.n_components;
        let v = match &self.initial {
            InitialData::Zero => vec![0.0; space.free_dofs() * nc],
            InitialData::SinSin => {
                space.interpolate_components(nc, |x, y, out| out.fill((PI * x).sin() * (PI * y).sin()))
            }
            InitialData::BrusselatorBump { amplitude } => space.interpolate_components(nc, |x, y, out| {
                out.fill(0.0);
                out[0] = amplitude * (0.5 * PI * x).cos() * (0.5 * PI * y).cos();
            }),
            InitialData::Coefficients(c) => c.clone(),
        };
        if v.len() != space.free_dofs() * nc {
            return Err(PodError::invalid(format!(
                "initial data has {} coefficients, space has {}",
                v.len(),
                space.free_dofs() * nc
            )));
        }
        Ok(v)
    }

    /// Assembled source load at time `t`, or `None` when the forcing vanishes.
    pub fn forcing_load(&self, assembler: &FieldAssembler, t: f64) -> Option<Vec<f64>> {
        match &self.forcing {
            Forcing::Zero => None,
            Forcing::CubicManufactured { nu } => {
                let amp = (-6.0 * nu * PI * PI * t).exp();
                Some(assembler.source_load(|x, y, out| out[0] = amp * ((PI * x).sin() * (PI * y).sin()).powi(3)))
            }
            &Forcing::RotatingSource { amplitude, width, radius, period } => {
                let phase = 2.0 * PI * t / period;
                let (cx, cy) = (0.5 + radius * phase.cos(), 0.5 + radius * phase.sin());
                Some(assembler.source_load(|x, y, out| {
                    let d2 = (x - cx).powi(2) + (y - cy).powi(2);
                    out.fill(amplitude * (-d2 / (width * width)).exp());
                }))
            }
            Forcing::DiscretePolynomial(coeffs) => {
                let mut out = vec![0.0; assembler.dim()];
                let mut tk = 1.0;
                for c in coeffs {
                    crate::linalg::axpy(tk, c, &mut out);
                    tk *= t;
                }
                Some(out)
            }
        }
    }

    /// Adds the lifting back to a free-dof vector.
    pub fn unlift(&self, state: &[f64]) -> Vec<f64> {
        let nc = self.n_components;
        state.iter().enumerate().map(|(i, v)| v + self.lifting[i % nc]).collect()
    }
}

/// Brusselator with diffusion in shifted variables: Γ₁ data `(u, v) = (1, 3)` becomes homogeneous
/// Dirichlet and Γ₂ stays homogeneous Neumann.
pub fn brusselator_lifted(nu: f64) -> Result<ProblemSpec> {
    let p = ProblemSpec {
        name: "brusselator".into(),
        nu,
        n_components: 2,
        reaction: Reaction::BrusselatorLifted,
        forcing: Forcing::Zero,
        initial: InitialData::BrusselatorBump { amplitude: 0.5 },
        bc_layout: BoundaryLayout::BrusselatorMixed,
        lifting: vec![1.0, 3.0],
    };
    p.validate()?;
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManufacturedKind {
    Heat,
    Cubic,
}

/// Closed-form solution `u(t, x, y) = e^{−2νπ²t} sin(πx) sin(πy)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactSolution {
    pub nu: f64,
}

impl ExactSolution {
    pub fn amplitude(&self, t: f64) -> f64 {
        (-2.0 * self.nu * PI * PI * t).exp()
    }

    pub fn eval(&self, t: f64, x: f64, y: f64) -> f64 {
        self.amplitude(t) * (PI * x).sin() * (PI * y).sin()
    }

    pub fn time_derivative(&self, t: f64, x: f64, y: f64) -> f64 {
        -2.0 * self.nu * PI * PI * self.eval(t, x, y)
    }

    pub fn laplacian(&self, t: f64, x: f64, y: f64) -> f64 {
        -2.0 * PI * PI * self.eval(t, x, y)
    }
}

pub fn manufactured_problem(kind: ManufacturedKind, nu: f64) -> Result<(ProblemSpec, ExactSolution)> {
    let (name, reaction, forcing) = match kind {
        ManufacturedKind::Heat => ("heat", Reaction::None(1), Forcing::Zero),
        // u_t − νΔu = 0 for this u, so f = g(u) = u³.
        ManufacturedKind::Cubic => ("cubic", Reaction::Cubic, Forcing::CubicManufactured { nu }),
    };
    let p = ProblemSpec {
        name: name.into(),
        nu,
        n_components: 1,
        reaction,
        forcing,
        initial: InitialData::SinSin,
        bc_layout: BoundaryLayout::DirichletAll,
        lifting: vec![0.0],
    };
    p.validate()?;
    Ok((p, ExactSolution { nu }))
}

/// Heat equation driven by a rotating Gaussian source, starting from rest.
///
/// The trajectory keeps exciting new spatial modes, which makes snapshot spacing matter.
pub fn rotating_source_problem(nu: f64, period: f64) -> Result<ProblemSpec> {
    let p = ProblemSpec {
        name: "rotating_source".into(),
        nu,
        n_components: 1,
        reaction: Reaction::None(1),
        forcing: Forcing::RotatingSource { amplitude: 10.0, width: 0.15, radius: 0.25, period },
        initial: InitialData::Zero,
        bc_layout: BoundaryLayout::DirichletAll,
        lifting: vec![0.0],
    };
    p.validate()?;
    Ok(p)
}

/// Looks up a built-in problem by name.
pub fn by_name(name: &str, nu: f64) -> Result<ProblemSpec> {
    match name {
        "brusselator" => brusselator_lifted(nu),
        "heat" => Ok(manufactured_problem(ManufacturedKind::Heat, nu)?.0),
        "cubic" => Ok(manufactured_problem(ManufacturedKind::Cubic, nu)?.0),
        "rotating_source" => rotating_source_problem(nu, 1.0),
        other => Err(PodError::invalid(format!("unknown problem '{other}'"))),
    }
}
