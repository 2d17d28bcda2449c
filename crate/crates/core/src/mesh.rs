//! Discretization meshes and the discrete decision data living on them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::ocp::{OcpDefinition, TimeMode};

/// Fixed-order collocation schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Euler,
    Trapezoidal,
    HermiteSimpson,
}

impl Scheme {
    /// Nodes per mesh interval, counting both endpoints.
    pub fn nodes_per_interval(self) -> usize {
        match self {
            Scheme::Euler | Scheme::Trapezoidal => 2,
            Scheme::HermiteSimpson => 3,
        }
    }

    /// Nodes at which the dynamics enter the defect; Euler only uses the left node.
    pub fn collocation_points(self) -> usize {
        match self {
            Scheme::Euler => 1,
            Scheme::Trapezoidal => 2,
            Scheme::HermiteSimpson => 3,
        }
    }

    /// Smallest admissible residual quadrature order, `4N + 1` for `N` collocation points.
    pub fn default_quadrature_order(self) -> usize {
        4 * self.collocation_points() + 1
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Scheme::Euler => "euler",
            Scheme::Trapezoidal => "trapezoidal",
            Scheme::HermiteSimpson => "hs",
        }
    }

    /// Normalized positions of the nodes inside one interval.
    pub(crate) fn local_nodes(self) -> &'static [f64] {
        match self {
            Scheme::Euler | Scheme::Trapezoidal => &[0.0, 1.0],
            Scheme::HermiteSimpson => &[0.0, 0.5, 1.0],
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Scheme::Euler),
            "trapezoidal" | "trap" => Ok(Scheme::Trapezoidal),
            "hs" | "hermite_simpson" | "hermite-simpson" | "hermitesimpson" => {
                Ok(Scheme::HermiteSimpson)
            }
            _ => Err(Error::UnknownScheme(s.to_string())),
        }
    }
}

/// Interval layout on normalized time `tau in [0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    fractions: Vec<f64>,
    scheme: Scheme,
    quadrature_order: usize,
}

impl Mesh {
    pub fn new(fractions: Vec<f64>, scheme: Scheme, quadrature_order: usize) -> Result<Self> {
        if fractions.is_empty() {
            return Err(Error::Mesh("at least one interval is required".into()));
        }
        if let Some(f) = fractions.iter().find(|f| !(**f > 0.0) || !f.is_finite()) {
            return Err(Error::Mesh(format!(
                "interval fraction {f} is not positive"
            )));
        }
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Mesh(format!("fractions sum to {sum}, not 1")));
        }
        if quadrature_order < scheme.default_quadrature_order() {
            return Err(Error::Mesh(format!(
                "quadrature order {quadrature_order} below 4N+1 = {}",
                scheme.default_quadrature_order()
            )));
        }
        if quadrature_order > 64 {
            return Err(Error::QuadratureOrder(quadrature_order));
        }
        Ok(Self {
            fractions,
            scheme,
            quadrature_order,
        })
    }

    /// `intervals` equal intervals with the default quadrature order.
    pub fn uniform(intervals: usize, scheme: Scheme) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::Mesh("at least one interval is required".into()));
        }
        let f = 1.0 / intervals as f64;
        let mut fractions = vec![f; intervals];
        // absorb rounding so the sum is exactly representable as 1
        let head: f64 = fractions[..intervals - 1].iter().sum();
        fractions[intervals - 1] = 1.0 - head;
        Self::new(fractions, scheme, scheme.default_quadrature_order())
    }

    pub fn with_quadrature_order(mut self, order: usize) -> Result<Self> {
        self = Self::new(self.fractions, self.scheme, order)?;
        Ok(self)
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn quadrature_order(&self) -> usize {
        self.quadrature_order
    }

    pub fn intervals(&self) -> usize {
        self.fractions.len()
    }

    pub fn nodes_per_interval(&self) -> usize {
        self.scheme.nodes_per_interval()
    }

    /// Distinct nodes, shared interval endpoints counted once.
    pub fn node_count(&self) -> usize {
        self.intervals() * (self.nodes_per_interval() - 1) + 1
    }

    /// Global index of local node `i` of interval `k`.
    pub fn node_index(&self, k: usize, i: usize) -> usize {
        k * (self.nodes_per_interval() - 1) + i
    }

    /// Interval boundaries on `[0, 1]`; first entry 0, last entry exactly 1.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut b = Vec::with_capacity(self.intervals() + 1);
        let mut acc = 0.0;
        b.push(0.0);
        for f in &self.fractions {
            acc += f;
            b.push(acc);
        }
        *b.last_mut().unwrap() = 1.0;
        b
    }

    /// Normalized time of every node.
    pub fn node_taus(&self) -> Vec<f64> {
        let b = self.boundaries();
        let mut taus = Vec::with_capacity(self.node_count());
        for k in 0..self.intervals() {
            let local = self.scheme.local_nodes();
            let skip = usize::from(k > 0);
            for &s in &local[skip..] {
                taus.push(if s == 1.0 {
                    b[k + 1]
                } else {
                    b[k] + s * self.fractions[k]
                });
            }
        }
        taus
    }

    /// Mesh with interval `k` split in half for every `k` where `split[k]`.
    pub fn bisect(&self, split: &[bool]) -> Result<Mesh> {
        check_len("refinement flags", self.intervals(), split.len())?;
        let mut fr = Vec::with_capacity(self.intervals() * 2);
        for (&f, &s) in self.fractions.iter().zip(split) {
            if s {
                fr.push(0.5 * f);
                fr.push(0.5 * f);
            } else {
                fr.push(f);
            }
        }
        Mesh::new(fr, self.scheme, self.quadrature_order)
    }
}

/// Discrete decision values `(X, U, p, t0, tf)`.
///
/// States and inputs are stored node-major: node `j` occupies
/// `states[j * n..(j + 1) * n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionData {
    pub n: usize,
    pub m: usize,
    pub states: Vec<f64>,
    pub inputs: Vec<f64>,
    pub params: Vec<f64>,
    pub t0: f64,
    pub tf: f64,
}

impl DecisionData {
    pub fn node_count(&self) -> usize {
        if self.n > 0 {
            self.states.len() / self.n
        } else if self.m > 0 {
            self.inputs.len() / self.m
        } else {
            0
        }
    }

    pub fn state(&self, node: usize) -> &[f64] {
        &self.states[node * self.n..(node + 1) * self.n]
    }

    pub fn state_mut(&mut self, node: usize) -> &mut [f64] {
        &mut self.states[node * self.n..(node + 1) * self.n]
    }

    pub fn input(&self, node: usize) -> &[f64] {
        &self.inputs[node * self.m..(node + 1) * self.m]
    }

    pub fn input_mut(&mut self, node: usize) -> &mut [f64] {
        &mut self.inputs[node * self.m..(node + 1) * self.m]
    }

    pub fn first_state(&self) -> &[f64] {
        self.state(0)
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.node_count() - 1)
    }

    pub fn horizon(&self) -> f64 {
        self.tf - self.t0
    }

    /// Absolute node times for `mesh`.
    pub fn node_times(&self, mesh: &Mesh) -> Vec<f64> {
        let dt = self.horizon();
        mesh.node_taus()
            .iter()
            .map(|tau| self.t0 + dt * tau)
            .collect()
    }

    /// Check consistency with `mesh` and `ocp`.
    pub fn validate(&self, mesh: &Mesh, ocp: &OcpDefinition) -> Result<()> {
        let nodes = mesh.node_count();
        check_len("state dimension", ocp.dims.states, self.n)?;
        check_len("input dimension", ocp.dims.inputs, self.m)?;
        check_len("node states", nodes * self.n, self.states.len())?;
        check_len("node inputs", nodes * self.m, self.inputs.len())?;
        check_len("parameters", ocp.dims.params, self.params.len())?;
        if !(self.t0 < self.tf) {
            return Err(Error::Decision(format!(
                "t0 = {} must be below tf = {}",
                self.t0, self.tf
            )));
        }
        Ok(())
    }
}

/// Offsets of the flat decision vector: all states node-major, then all
/// inputs node-major, then parameters, then `tf` when it is free.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    pub m: usize,
    pub s: usize,
    pub nodes: usize,
    pub free_final_time: bool,
}

impl Layout {
    pub fn new(mesh: &Mesh, ocp: &OcpDefinition) -> Self {
        Self {
            n: ocp.dims.states,
            m: ocp.dims.inputs,
            s: ocp.dims.params,
            nodes: mesh.node_count(),
            free_final_time: ocp.time.is_free_final(),
        }
    }

    pub fn input_offset(&self) -> usize {
        self.n * self.nodes
    }

    pub fn param_offset(&self) -> usize {
        (self.n + self.m) * self.nodes
    }

    pub fn time_offset(&self) -> usize {
        self.param_offset() + self.s
    }

    pub fn len(&self) -> usize {
        self.time_offset() + usize::from(self.free_final_time)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn pack(z: &DecisionData, ocp: &OcpDefinition) -> Vec<f64> {
    let mut v = Vec::with_capacity(z.states.len() + z.inputs.len() + z.params.len() + 1);
    v.extend_from_slice(&z.states);
    v.extend_from_slice(&z.inputs);
    v.extend_from_slice(&z.params);
    if ocp.time.is_free_final() {
        v.push(z.tf);
    }
    v
}

pub fn unpack(v: &[f64], mesh: &Mesh, ocp: &OcpDefinition) -> Result<DecisionData> {
    let layout = Layout::new(mesh, ocp);
    check_len("decision vector", layout.len(), v.len())?;
    let (t0, tf) = match ocp.time {
        TimeMode::Fixed { t0, tf } => (t0, tf),
        TimeMode::FreeFinal { t0, .. } => (t0, v[layout.time_offset()]),
    };
    Ok(DecisionData {
        n: layout.n,
        m: layout.m,
        states: v[..layout.input_offset()].to_vec(),
        inputs: v[layout.input_offset()..layout.param_offset()].to_vec(),
        params: v[layout.param_offset()..layout.time_offset()].to_vec(),
        t0,
        tf,
    })
}
