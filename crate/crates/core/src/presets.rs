//! Named data presets: coefficient tensors, reaction terms, boundary sources
//! and initial values. Listed by the `presets` command.

use serde::{Deserialize, Serialize};

use crate::fem::CoefficientField;

const TAU: f64 = 2.0 * std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorPreset {
    Identity,
    Diag21,
    Diag23,
    Oscillating,
    Anisotropic,
}

impl TensorPreset {
    pub const ALL: [TensorPreset; 5] = [
        TensorPreset::Identity,
        TensorPreset::Diag21,
        TensorPreset::Diag23,
        TensorPreset::Oscillating,
        TensorPreset::Anisotropic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TensorPreset::Identity => "identity",
            TensorPreset::Diag21 => "diag21",
            TensorPreset::Diag23 => "diag23",
            TensorPreset::Oscillating => "oscillating",
            TensorPreset::Anisotropic => "anisotropic",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            TensorPreset::Identity => "I",
            TensorPreset::Diag21 => "diag(2, 1)",
            TensorPreset::Diag23 => "diag(2, 3)",
            TensorPreset::Oscillating => "(1 + 0.5 cos(2 pi y1) cos(2 pi y2)) I",
            TensorPreset::Anisotropic => "[[1.5, 0.3], [0.3, 1.0]]",
        }
    }

    /// Value at a point of the unit cell, as `[a11, a12, a22]`.
    pub fn eval(self, y: [f64; 2]) -> [f64; 3] {
        match self {
            TensorPreset::Identity => [1.0, 0.0, 1.0],
            TensorPreset::Diag21 => [2.0, 0.0, 1.0],
            TensorPreset::Diag23 => [2.0, 0.0, 3.0],
            TensorPreset::Oscillating => {
                let s = 1.0 + 0.5 * (TAU * y[0]).cos() * (TAU * y[1]).cos();
                [s, 0.0, s]
            }
            TensorPreset::Anisotropic => [1.5, 0.3, 1.0],
        }
    }

    pub fn is_constant(self) -> bool {
        self != TensorPreset::Oscillating
    }

    /// Sampled at micro cell centres of an `m x m` lattice.
    pub fn field(self, m: usize) -> CoefficientField {
        if self.is_constant() {
            CoefficientField::uniform(self.eval([0.0, 0.0]))
        } else {
            CoefficientField::sampled(m, |y| self.eval(y))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReactionPreset {
    None,
    Logistic,
}

impl ReactionPreset {
    pub const ALL: [ReactionPreset; 2] = [ReactionPreset::None, ReactionPreset::Logistic];

    pub fn name(self) -> &'static str {
        match self {
            ReactionPreset::None => "none",
            ReactionPreset::Logistic => "logistic",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            ReactionPreset::None => "R = 0",
            ReactionPreset::Logistic => {
                "R(s) = s (2 - s) on [0, 3], 0 for s < 0, continued with slope -4 beyond 3 (L = 4)"
            }
        }
    }

    pub fn eval(self, s: f64) -> f64 {
        match self {
            ReactionPreset::None => 0.0,
            ReactionPreset::Logistic => {
                if s <= 0.0 {
                    0.0
                } else if s <= 3.0 {
                    s * (2.0 - s)
                } else {
                    -3.0 - 4.0 * (s - 3.0)
                }
            }
        }
    }

    pub fn lipschitz(self) -> f64 {
        match self {
            ReactionPreset::None => 0.0,
            ReactionPreset::Logistic => 4.0,
        }
    }
}

/// Boundary datum `𝕍(t, x, y)` for the pore surface.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourcePreset {
    Default,
    Oscillating,
    Zero,
}

impl SourcePreset {
    pub const ALL: [SourcePreset; 3] = [SourcePreset::Default, SourcePreset::Oscillating, SourcePreset::Zero];

    pub fn name(self) -> &'static str {
        match self {
            SourcePreset::Default => "default",
            SourcePreset::Oscillating => "oscillating",
            SourcePreset::Zero => "zero",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            SourcePreset::Default => "V = (1 + x1)(1 + 0.5 cos(2 pi t))",
            SourcePreset::Oscillating => "V = (1 + x1)(1 + 0.5 cos(2 pi t))(1 + 0.5 cos(2 pi y1))",
            SourcePreset::Zero => "V = 0",
        }
    }

    pub fn eval(self, t: f64, x: [f64; 2], y: [f64; 2]) -> f64 {
        match self {
            SourcePreset::Default => (1.0 + x[0]) * (1.0 + 0.5 * (TAU * t).cos()),
            SourcePreset::Oscillating => {
                (1.0 + x[0]) * (1.0 + 0.5 * (TAU * t).cos()) * (1.0 + 0.5 * (TAU * y[0]).cos())
            }
            SourcePreset::Zero => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialPreset {
    Default,
    Zero,
}

impl InitialPreset {
    pub const ALL: [InitialPreset; 2] = [InitialPreset::Default, InitialPreset::Zero];

    pub fn name(self) -> &'static str {
        match self {
            InitialPreset::Default => "default",
            InitialPreset::Zero => "zero",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            InitialPreset::Default => {
                "u0 = 1 + 0.5 cos(pi x1) cos(pi x2); Theta0 = u0 (1 + 0.5 cos(2 pi y1) cos(2 pi y2)) / 1.5"
            }
            InitialPreset::Zero => "u0 = 0, Theta0 = 0",
        }
    }

    /// Macroscopic initial concentration `u⁰(x)`.
    pub fn u0(self, x: [f64; 2]) -> f64 {
        match self {
            InitialPreset::Default => {
                let pi = std::f64::consts::PI;
                1.0 + 0.5 * (pi * x[0]).cos() * (pi * x[1]).cos()
            }
            InitialPreset::Zero => 0.0,
        }
    }

    /// Two-scale initial temperature `Θ⁰(x, y)`, Y-periodic in `y`.
    pub fn theta0(self, x: [f64; 2], y: [f64; 2]) -> f64 {
        match self {
            InitialPreset::Default => self.u0(x) * (1.0 + 0.5 * (TAU * y[0]).cos() * (TAU * y[1]).cos()) / 1.5,
            InitialPreset::Zero => 0.0,
        }
    }
}

/// One line per preset, grouped by kind.
pub fn listing() -> String {
    let mut s = String::from("tensors (physics.diffusion, physics.conductivity):\n");
    for p in TensorPreset::ALL {
        s.push_str(&format!("  {:<12} {}\n", p.name(), p.describe()));
    }
    s.push_str("reactions (physics.reaction):\n");
    for p in ReactionPreset::ALL {
        s.push_str(&format!("  {:<12} {}\n", p.name(), p.describe()));
    }
    s.push_str("sources (physics.source):\n");
    for p in SourcePreset::ALL {
        s.push_str(&format!("  {:<12} {}\n", p.name(), p.describe()));
    }
    s.push_str("initial values (physics.initial):\n");
    for p in InitialPreset::ALL {
        s.push_str(&format!("  {:<12} {}\n", p.name(), p.describe()));
    }
    s
}
