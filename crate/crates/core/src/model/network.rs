use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::math;
use crate::netgraph::{off_diagonal_pairs, InterferenceGraph, MaskView};
use crate::objectives::{GainMatrix, Objective};
use crate::tensor::{Bound, ParameterSet, Tape, Tensor, Var};

/// Which branch of the teacher-student pair is being evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Projector followed by the predictor.
    Student,
    /// Projector only.
    Teacher,
}

/// Forward pass over parameters bound on a tape.
pub struct Network<'a> {
    pub cfg: &'a ModelConfig,
    pub vars: &'a Bound,
}

impl<'a> Network<'a> {
    pub fn new(cfg: &'a ModelConfig, vars: &'a Bound) -> Self {
        Self { cfg, vars }
    }

    fn p(&self, name: &str) -> Result<Var> {
        self.vars.get(name)
    }

    fn affine(&self, tape: &mut Tape, x: Var, w: &str, b: &str) -> Result<Var> {
        let y = tape.matmul(x, self.p(w)?)?;
        tape.add_bias(y, self.p(b)?)
    }

    /// Two affine layers with a ReLU between them.
    fn mlp2(&self, tape: &mut Tape, x: Var, prefix: &str) -> Result<Var> {
        let h = self.affine(tape, x, &format!("{prefix}.w1"), &format!("{prefix}.b1"))?;
        let h = tape.relu(h);
        self.affine(tape, h, &format!("{prefix}.w2"), &format!("{prefix}.b2"))
    }

    /// `Z0 = affine2(relu(affine1(node_feat)))`, `k x d_model`.
    pub fn encode_nodes(&self, tape: &mut Tape, graph: &InterferenceGraph) -> Result<Var> {
        let f = self.cfg.node_features;
        if graph.node_feat.len() != graph.k * f {
            return Err(Error::invalid("node features do not match the model's node width"));
        }
        let x = tape.constant(Tensor::matrix(graph.k, f, graph.node_feat.clone())?);
        self.mlp2(tape, x, "enc")
    }

    /// Per-head attention biases, one `k x k` tensor per head. Masked edges
    /// read the learnable mask token instead of their features; the diagonal
    /// carries the learnable self bias.
    pub fn bias_project(
        &self,
        tape: &mut Tape,
        graph: &InterferenceGraph,
        mask: &MaskView,
    ) -> Result<Vec<Var>> {
        let k = graph.k;
        let fe = self.cfg.edge_features;
        let heads = self.cfg.heads;
        if mask.k != k {
            return Err(Error::Shape {
                op: "bias_project",
                lhs: vec![k, k],
                rhs: vec![mask.k, mask.k],
            });
        }
        let pairs = off_diagonal_pairs(k);
        let n_edges = pairs.len();
        let mut feats = Vec::with_capacity(n_edges * fe);
        for &(r, c) in &pairs {
            feats.extend_from_slice(graph.edge(r, c));
        }
        let e = tape.constant(Tensor::matrix(n_edges, fe, feats)?);
        let stacked = tape.concat_rows(&[e, self.p("bias.mask_token")?])?;
        let pick: Vec<usize> = pairs
            .iter()
            .enumerate()
            .map(|(i, &(r, c))| if mask.is_masked(r, c) { n_edges } else { i })
            .collect();
        let inputs = tape.gather_rows(stacked, &pick)?;
        let off_diag = self.mlp2(tape, inputs, "bias")?;

        let with_self = tape.concat_rows(&[off_diag, self.p("bias.self")?])?;
        let mut order = Vec::with_capacity(k * k);
        let mut next = 0;
        for r in 0..k {
            for c in 0..k {
                if r == c {
                    order.push(n_edges);
                } else {
                    order.push(next);
                    next += 1;
                }
            }
        }
        let full = tape.gather_rows(with_self, &order)?;
        (0..heads)
            .map(|m| {
                let col = tape.slice_last(full, m, 1)?;
                tape.reshape(col, &[k, k])
            })
            .collect()
    }

    /// One post-norm transformer layer with bias-injected multi-head attention
    /// over all nodes, self included.
    pub fn attention_layer(&self, tape: &mut Tape, layer: usize, z: Var, biases: &[Var]) -> Result<Var> {
        let heads = self.cfg.heads;
        if biases.len() != heads {
            return Err(Error::invalid("one bias matrix per head is required"));
        }
        let scale = 1.0 / math::sqrt(self.cfg.head_dim() as f64);
        let mut outs = Vec::with_capacity(heads);
        for (m, bias) in biases.iter().enumerate() {
            let q = tape.matmul(z, self.p(&format!("layer{layer}.wq{m}"))?)?;
            let kk = tape.matmul(z, self.p(&format!("layer{layer}.wk{m}"))?)?;
            let v = tape.matmul(z, self.p(&format!("layer{layer}.wv{m}"))?)?;
            let scores = tape.matmul_t(q, kk)?;
            let scores = tape.scale(scores, scale);
            let scores = tape.add(scores, *bias)?;
            let weights = tape.softmax(scores)?;
            outs.push(tape.matmul(weights, v)?);
        }
        let cat = tape.concat_last(&outs)?;
        let attended = tape.matmul(cat, self.p(&format!("layer{layer}.wo"))?)?;
        let h = tape.add(z, attended)?;
        let h = tape.layer_norm(
            h,
            self.p(&format!("layer{layer}.ln1.gamma"))?,
            self.p(&format!("layer{layer}.ln1.beta"))?,
        )?;
        let f = self.mlp2(tape, h, &format!("layer{layer}.ffn"))?;
        let out = tape.add(h, f)?;
        tape.layer_norm(
            out,
            self.p(&format!("layer{layer}.ln2.gamma"))?,
            self.p(&format!("layer{layer}.ln2.beta"))?,
        )
    }

    /// Node encoder followed by every attention layer, sharing one set of
    /// attention biases.
    pub fn backbone(&self, tape: &mut Tape, graph: &InterferenceGraph, mask: &MaskView) -> Result<Var> {
        let mut z = self.encode_nodes(tape, graph)?;
        if self.cfg.layers == 0 {
            return Ok(z);
        }
        let biases = self.bias_project(tape, graph, mask)?;
        for l in 0..self.cfg.layers {
            z = self.attention_layer(tape, l, z, &biases)?;
        }
        Ok(z)
    }

    /// Predicted features for each `(receiver, transmitter)` pair from the
    /// concatenated node embeddings, `pairs.len() x edge_features`.
    pub fn edge_decode(&self, tape: &mut Tape, z: Var, pairs: &[(usize, usize)]) -> Result<Var> {
        if let Some((r, _)) = pairs.iter().find(|(r, c)| r == c) {
            return Err(Error::invalid(format!("edge ({r}, {r}) is on the diagonal")));
        }
        let rx: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let tx: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let zr = tape.gather_rows(z, &rx)?;
        let zt = tape.gather_rows(z, &tx)?;
        let x = tape.concat_last(&[zr, zt])?;
        self.mlp2(tape, x, "dec")
    }

    pub fn project(&self, tape: &mut Tape, z: Var, role: Role) -> Result<Var> {
        let y = self.affine(tape, z, "proj.w", "proj.b")?;
        match role {
            Role::Teacher => Ok(y),
            Role::Student => self.mlp2(tape, y, "pred"),
        }
    }

    /// `p_max * sigmoid(mlp(z))`, `k x 1`.
    pub fn decision_head(&self, tape: &mut Tape, z: Var, p_max: f64) -> Result<Var> {
        let logits = self.mlp2(tape, z, "head")?;
        let s = tape.sigmoid(logits);
        Ok(tape.scale(s, p_max))
    }
}

/// Differentiable utility of `powers` (`k x 1`) on the tape. Agrees with
/// [`crate::objectives::utility`] of [`crate::objectives::rates`].
pub fn utility_on_tape(
    tape: &mut Tape,
    powers: Var,
    gains: &GainMatrix,
    sigma2: f64,
    objective: &Objective,
) -> Result<Var> {
    let k = gains.k();
    let direct: Vec<f64> = (0..k).map(|r| gains.get(r, r)).collect();
    let mut cross = gains.as_slice().to_vec();
    for r in 0..k {
        cross[r * k + r] = 0.0;
    }
    let direct = tape.constant(Tensor::matrix(k, 1, direct)?);
    let cross = tape.constant(Tensor::matrix(k, k, cross)?);
    let interference = tape.matmul(cross, powers)?;
    let denom = tape.add_scalar(interference, sigma2);
    let signal = tape.mul(direct, powers)?;
    let sinr = tape.div(signal, denom)?;
    let one_plus = tape.add_scalar(sinr, 1.0);
    let ln = tape.ln(one_plus);
    let rates = tape.scale(ln, core::f64::consts::LOG2_E);
    Ok(match *objective {
        Objective::SumRate => tape.sum(rates),
        Objective::ProportionalFairness { epsilon } => {
            let floored = tape.clamp_min(rates, epsilon);
            let logs = tape.ln(floored);
            tape.sum(logs)
        }
        Objective::Qos { r_min, alpha } => {
            let neg = tape.scale(rates, -1.0);
            let gap = tape.add_scalar(neg, r_min);
            let shortfall = tape.relu(gap);
            let total = tape.sum(rates);
            let penalty = tape.sum(shortfall);
            let penalty = tape.scale(penalty, alpha);
            tape.sub(total, penalty)?
        }
    })
}

/// Powers chosen by a deployed model for `graph` under `mask`.
pub fn infer_powers(
    cfg: &ModelConfig,
    params: &ParameterSet,
    graph: &InterferenceGraph,
    mask: &MaskView,
    p_max: f64,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let vars = tape.bind(params, |_| false);
    let net = Network::new(cfg, &vars);
    let z = net.backbone(&mut tape, graph, mask)?;
    let p = net.decision_head(&mut tape, z, p_max)?;
    Ok(tape.value(p).data().to_vec())
}
