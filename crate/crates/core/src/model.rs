//! Domain types for the plant, controller, wireless network and channel,
//! plus assembly of the closed-loop system seen by the network.
//!
//! The networked closed loop is split into the plant/controller state `x`
//! and the network-induced error `e = (ŷ - y, û - u)`. With zero-order
//! hold devices the flows are
//!
//! ```text
//! ẋ = A11 x + A12 e + E1 w
//! ė = A21 x + A22 e + E2 w
//! ```
//!
//! and a successful transmission resets the transmitted coordinates of `e`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

fn check_finite(m: &Matrix, name: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name))
    }
}

fn check_shape(m: &Matrix, rows: usize, cols: usize, name: &str) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::dim(format!(
            "{name} is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Continuous-time LTI plant `ẋp = Ap xp + Bp u + Ep w`, `y = Cp xp`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiPlant {
    pub a: Matrix,
    pub b: Matrix,
    pub e: Matrix,
    pub c: Matrix,
}

impl LtiPlant {
    pub fn new(a: Matrix, b: Matrix, e: Matrix, c: Matrix) -> Result<Self> {
        let np = a.nrows();
        check_shape(&a, np, np, "plant A")?;
        if b.nrows() != np || e.nrows() != np || c.ncols() != np {
            return Err(Error::dim(format!(
                "plant with {np} states: B has {} rows, E has {} rows, C has {} columns",
                b.nrows(),
                e.nrows(),
                c.ncols()
            )));
        }
        check_finite(&a, "plant A")?;
        check_finite(&b, "plant B")?;
        check_finite(&e, "plant E")?;
        check_finite(&c, "plant C")?;
        Ok(Self { a, b, e, c })
    }

    /// Plant without a disturbance channel (a single zero disturbance column).
    pub fn undisturbed(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let e = Matrix::zeros(a.nrows(), 1);
        Self::new(a, b, e, c)
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }
    pub fn n_disturbances(&self) -> usize {
        self.e.ncols()
    }
}

/// Dynamic output-feedback controller `ẋc = Ac xc + Bc y`, `u = Cc xc`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiController {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
}

impl LtiController {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let nc = a.nrows();
        check_shape(&a, nc, nc, "controller A")?;
        if b.nrows() != nc || c.ncols() != nc {
            return Err(Error::dim(format!(
                "controller with {nc} states: B has {} rows, C has {} columns",
                b.nrows(),
                c.ncols()
            )));
        }
        check_finite(&a, "controller A")?;
        check_finite(&b, "controller B")?;
        check_finite(&c, "controller C")?;
        Ok(Self { a, b, c })
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }
}

/// Which signals travel over the wireless network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LoopWiring {
    /// Both measurements and control inputs are networked: `e = (ŷ - y, û - u)`.
    #[default]
    Full,
    /// Only measurements are networked: `e = ŷ - y`.
    SensorOnly,
}

/// Closed-loop LTI system in `(x, e)` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiWncs {
    pub a11: Matrix,
    pub a12: Matrix,
    pub a21: Matrix,
    pub a22: Matrix,
    pub e1: Matrix,
    pub e2: Matrix,
    /// Map from `ẋ` to the negated error derivative (`diag{Cp, Cc}` for the
    /// full wiring, `[Cp 0]` for sensor-only): `A21 = -output_map A11`.
    pub output_map: Matrix,
    pub n_plant: usize,
    pub wiring: LoopWiring,
}

impl LtiWncs {
    pub fn n_x(&self) -> usize {
        self.a11.nrows()
    }
    pub fn n_e(&self) -> usize {
        self.a22.nrows()
    }
    pub fn n_w(&self) -> usize {
        self.e1.ncols()
    }

    /// Flow matrix of the stacked state `(x, e)`.
    pub fn flow_matrix(&self) -> Matrix {
        let (nx, ne) = (self.n_x(), self.n_e());
        let mut m = Matrix::zeros(nx + ne, nx + ne);
        m.view_mut((0, 0), (nx, nx)).copy_from(&self.a11);
        m.view_mut((0, nx), (nx, ne)).copy_from(&self.a12);
        m.view_mut((nx, 0), (ne, nx)).copy_from(&self.a21);
        m.view_mut((nx, nx), (ne, ne)).copy_from(&self.a22);
        m
    }

    /// Disturbance matrix of the stacked state `(x, e)`.
    pub fn disturbance_matrix(&self) -> Matrix {
        let (nx, ne, nw) = (self.n_x(), self.n_e(), self.n_w());
        let mut m = Matrix::zeros(nx + ne, nw);
        m.view_mut((0, 0), (nx, nw)).copy_from(&self.e1);
        m.view_mut((nx, 0), (ne, nw)).copy_from(&self.e2);
        m
    }
}

fn check_interconnect(plant: &LtiPlant, controller: &LtiController) -> Result<()> {
    if controller.b.ncols() != plant.n_outputs() {
        return Err(Error::dim(format!(
            "controller B takes {} inputs but the plant has {} outputs",
            controller.b.ncols(),
            plant.n_outputs()
        )));
    }
    if controller.c.nrows() != plant.n_inputs() {
        return Err(Error::dim(format!(
            "controller C produces {} outputs but the plant has {} inputs",
            controller.c.nrows(),
            plant.n_inputs()
        )));
    }
    Ok(())
}

fn plant_controller_a11(plant: &LtiPlant, controller: &LtiController) -> Matrix {
    let (np, nc) = (plant.n_states(), controller.n_states());
    let mut a11 = Matrix::zeros(np + nc, np + nc);
    a11.view_mut((0, 0), (np, np)).copy_from(&plant.a);
    a11.view_mut((0, np), (np, nc))
        .copy_from(&(&plant.b * &controller.c));
    a11.view_mut((np, 0), (nc, np))
        .copy_from(&(&controller.b * &plant.c));
    a11.view_mut((np, np), (nc, nc)).copy_from(&controller.a);
    a11
}

fn assemble(
    plant: &LtiPlant,
    a11: Matrix,
    a12: Matrix,
    output_map: Matrix,
    wiring: LoopWiring,
) -> LtiWncs {
    let nx = a11.nrows();
    let mut e1 = Matrix::zeros(nx, plant.n_disturbances());
    e1.view_mut((0, 0), (plant.n_states(), plant.n_disturbances()))
        .copy_from(&plant.e);
    let a21 = -(&output_map * &a11);
    let a22 = -(&output_map * &a12);
    let e2 = -(&output_map * &e1);
    LtiWncs {
        a11,
        a12,
        a21,
        a22,
        e1,
        e2,
        output_map,
        n_plant: plant.n_states(),
        wiring,
    }
}

/// Closed loop with both `y` and `u` sent over the network.
pub fn build_closed_loop(plant: &LtiPlant, controller: &LtiController) -> Result<LtiWncs> {
    check_interconnect(plant, controller)?;
    let (np, nc) = (plant.n_states(), controller.n_states());
    let (ny, nu) = (plant.n_outputs(), plant.n_inputs());
    let a11 = plant_controller_a11(plant, controller);

    // e = (e_y, e_u)
    let mut a12 = Matrix::zeros(np + nc, ny + nu);
    a12.view_mut((0, ny), (np, nu)).copy_from(&plant.b);
    a12.view_mut((np, 0), (nc, ny)).copy_from(&controller.b);

    let mut output_map = Matrix::zeros(ny + nu, np + nc);
    output_map.view_mut((0, 0), (ny, np)).copy_from(&plant.c);
    output_map.view_mut((ny, np), (nu, nc)).copy_from(&controller.c);

    Ok(assemble(plant, a11, a12, output_map, LoopWiring::Full))
}

/// Closed loop where the control input reaches the plant directly and only
/// the measurements are networked (`e = ŷ - y`).
pub fn build_sensor_only_loop(plant: &LtiPlant, controller: &LtiController) -> Result<LtiWncs> {
    check_interconnect(plant, controller)?;
    let (np, nc) = (plant.n_states(), controller.n_states());
    let ny = plant.n_outputs();
    let a11 = plant_controller_a11(plant, controller);

    let mut a12 = Matrix::zeros(np + nc, ny);
    a12.view_mut((np, 0), (nc, ny)).copy_from(&controller.b);

    let mut output_map = Matrix::zeros(ny, np + nc);
    output_map.view_mut((0, 0), (ny, np)).copy_from(&plant.c);

    Ok(assemble(plant, a11, a12, output_map, LoopWiring::SensorOnly))
}

pub fn build_loop(
    plant: &LtiPlant,
    controller: &LtiController,
    wiring: LoopWiring,
) -> Result<LtiWncs> {
    match wiring {
        LoopWiring::Full => build_closed_loop(plant, controller),
        LoopWiring::SensorOnly => build_sensor_only_loop(plant, controller),
    }
}

/// One transmitter/receiver pair. `coords` lists the error coordinates it
/// carries.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub success: f64,
    pub coords: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub links: Vec<Link>,
}

impl Node {
    pub fn coords(&self) -> impl Iterator<Item = usize> + '_ {
        self.links.iter().flat_map(|l| l.coords.iter().copied())
    }
}

/// Nodes (clusters) of links and their per-link success probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    nodes: Vec<Node>,
    n_e: usize,
}

impl NetworkTopology {
    /// Validates probabilities and that the link coordinates partition `0..n_e`.
    pub fn new(nodes: Vec<Node>, n_e: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::param("network needs at least one node"));
        }
        let mut seen = vec![false; n_e];
        for (n, node) in nodes.iter().enumerate() {
            if node.links.is_empty() {
                return Err(Error::param(format!("node {n} has no links")));
            }
            for link in &node.links {
                if !(link.success > 0.0 && link.success <= 1.0) {
                    return Err(Error::param(format!(
                        "node {n}: link success probability {} outside (0, 1]",
                        link.success
                    )));
                }
                if link.coords.is_empty() {
                    return Err(Error::param(format!("node {n}: link carries no coordinate")));
                }
                for &c in &link.coords {
                    if c >= n_e {
                        return Err(Error::dim(format!(
                            "node {n}: coordinate {c} out of range for n_e = {n_e}"
                        )));
                    }
                    if std::mem::replace(&mut seen[c], true) {
                        return Err(Error::dim(format!("coordinate {c} carried by two links")));
                    }
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::dim(format!("coordinate {missing} is not carried by any link")));
        }
        Ok(Self { nodes, n_e })
    }

    /// One error coordinate per link, assigned in order: node 0's links
    /// first, then node 1's, and so on.
    pub fn sequential(probabilities: &[Vec<f64>]) -> Result<Self> {
        let mut next = 0;
        let nodes = probabilities
            .iter()
            .map(|links| Node {
                links: links
                    .iter()
                    .map(|&success| {
                        next += 1;
                        Link {
                            success,
                            coords: vec![next - 1],
                        }
                    })
                    .collect(),
            })
            .collect();
        Self::new(nodes, next)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
    pub fn n_e(&self) -> usize {
        self.n_e
    }
    pub fn link_counts(&self) -> Vec<usize> {
        self.nodes.iter().map(|n| n.links.len()).collect()
    }

    /// Probability that every link of `node` (0-based) succeeds.
    pub fn cumulative_success(&self, node: usize) -> Result<f64> {
        self.nodes
            .get(node)
            .map(|n| n.links.iter().map(|l| l.success).product())
            .ok_or_else(|| {
                Error::param(format!(
                    "node index {node} out of range ({} nodes)",
                    self.nodes.len()
                ))
            })
    }

    pub fn cumulative_successes(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .map(|n| n.links.iter().map(|l| l.success).product())
            .collect()
    }

    /// Same wiring with new per-link probabilities (outer index = node).
    pub fn with_probabilities(&self, probabilities: &[Vec<f64>]) -> Result<Self> {
        if probabilities.len() != self.nodes.len()
            || probabilities
                .iter()
                .zip(&self.nodes)
                .any(|(p, n)| p.len() != n.links.len())
        {
            return Err(Error::dim("probability layout does not match topology"));
        }
        let nodes = self
            .nodes
            .iter()
            .zip(probabilities)
            .map(|(node, probs)| Node {
                links: node
                    .links
                    .iter()
                    .zip(probs)
                    .map(|(l, &success)| Link {
                        success,
                        coords: l.coords.clone(),
                    })
                    .collect(),
            })
            .collect();
        Self::new(nodes, self.n_e)
    }
}

/// Interference data of the links inside one node.
///
/// `gains[(i, j)]` is the gain from link `i`'s transmitter to link `j`'s
/// receiver, so `gains[(i, i)]` is the direct gain of link `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeChannel {
    pub gains: Matrix,
    pub noise: Vec<f64>,
}

impl NodeChannel {
    pub fn new(gains: Matrix, noise: Vec<f64>) -> Result<Self> {
        let l = noise.len();
        if l == 0 {
            return Err(Error::param("node channel needs at least one link"));
        }
        check_shape(&gains, l, l, "gain matrix")?;
        if gains.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::param("channel gains must be finite and strictly positive"));
        }
        if noise.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::param("noise variances must be finite and strictly positive"));
        }
        Ok(Self { gains, noise })
    }

    pub fn links(&self) -> usize {
        self.noise.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    pub nodes: Vec<NodeChannel>,
    /// Outage parameter of `Φ(s) = exp(-a / s)`.
    pub a: f64,
    pub p_max: f64,
}

impl ChannelModel {
    pub fn new(nodes: Vec<NodeChannel>, a: f64, p_max: f64) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::param("channel needs at least one node"));
        }
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::param(format!("outage parameter a = {a} must be positive")));
        }
        if !(p_max.is_finite() && p_max > 0.0) {
            return Err(Error::param(format!("P_max = {p_max} must be positive")));
        }
        Ok(Self { nodes, a, p_max })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    /// Nodes visited in index order, cyclically; the first transmission
    /// belongs to node 0.
    RoundRobin,
    /// Each transmission picks a node uniformly at random.
    StochasticUniform,
}

/// Poisson transmission process with rate `ω`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionModel {
    rate: f64,
}

impl TransmissionModel {
    pub fn new(rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::param(format!("arrival rate {rate} must be finite and positive")));
        }
        Ok(Self { rate })
    }

    pub fn from_mean_interval(tau_bar: f64) -> Result<Self> {
        if !(tau_bar.is_finite() && tau_bar > 0.0) {
            return Err(Error::param(format!("mean interval {tau_bar} must be positive")));
        }
        Self::new(1.0 / tau_bar)
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn mean_interval(&self) -> f64 {
        1.0 / self.rate
    }
}
