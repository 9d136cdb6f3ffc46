use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::{Cell, RefCell};

use crate::error::{Error, Result};
use crate::network::ShapNetwork;
use crate::tensor::Tensor;

use super::{CoalitionMask, ValueFunction};

/// A cooperative game with `players()` players and vector-valued payoffs.
pub trait CoalitionGame {
    fn players(&self) -> usize;
    fn outputs(&self) -> usize;
    /// Writes `v(S)` for every mask into `out`, `outputs()` values per mask.
    fn evaluate(&self, masks: &[CoalitionMask], out: &mut [f64]) -> Result<()>;
}

/// Game backed by a closure.
pub struct FnGame<F> {
    n: usize,
    d: usize,
    f: F,
}

impl<F: Fn(&CoalitionMask, &mut [f64])> FnGame<F> {
    pub fn new(n: usize, d: usize, f: F) -> Self {
        Self { n, d, f }
    }
}

/// Scalar-valued game from a closure.
pub fn scalar_game(n: usize, f: impl Fn(&CoalitionMask) -> f64) -> FnGame<impl Fn(&CoalitionMask, &mut [f64])> {
    FnGame::new(n, 1, move |m: &CoalitionMask, out: &mut [f64]| out[0] = f(m))
}

impl<F: Fn(&CoalitionMask, &mut [f64])> CoalitionGame for FnGame<F> {
    fn players(&self) -> usize {
        self.n
    }

    fn outputs(&self) -> usize {
        self.d
    }

    fn evaluate(&self, masks: &[CoalitionMask], out: &mut [f64]) -> Result<()> {
        for (m, o) in masks.iter().zip(out.chunks_exact_mut(self.d)) {
            (self.f)(m, o);
        }
        Ok(())
    }
}

/// Which logits of the model a game pays out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputSelection {
    All,
    One(usize),
}

/// The model's own masking game for one instance: `v(S)` is the logit
/// (pre-link) on the masked input, averaged over background rows for the
/// marginal value function.
pub struct ModelGame<'a> {
    net: &'a ShapNetwork,
    x: Vec<f64>,
    vf: &'a ValueFunction,
    outputs: OutputSelection,
}

/// Upper bound on rows per forward pass while evaluating games.
const MAX_ROWS: usize = 4096;

impl<'a> ModelGame<'a> {
    pub fn new(net: &'a ShapNetwork, x: &[f64], vf: &'a ValueFunction, outputs: OutputSelection) -> Result<Self> {
        if x.len() != net.n_features() || vf.players() != net.n_features() {
            return Err(Error::shape(format!(
                "instance has {} values, value function {} players, network {} features",
                x.len(),
                vf.players(),
                net.n_features()
            )));
        }
        if let OutputSelection::One(j) = outputs {
            if j >= net.n_outputs() {
                return Err(Error::invalid(format!("output {j} out of range for {} outputs", net.n_outputs())));
            }
        }
        Ok(Self {
            net,
            x: x.to_vec(),
            vf,
            outputs,
        })
    }
}

impl CoalitionGame for ModelGame<'_> {
    fn players(&self) -> usize {
        self.x.len()
    }

    fn outputs(&self) -> usize {
        match self.outputs {
            OutputSelection::All => self.net.n_outputs(),
            OutputSelection::One(_) => 1,
        }
    }

    fn evaluate(&self, masks: &[CoalitionMask], out: &mut [f64]) -> Result<()> {
        let n = self.x.len();
        let d = self.net.n_outputs();
        let per = self.vf.rows_per_mask();
        let width = self.outputs();
        let chunk = (MAX_ROWS / per).max(1);
        let mut rows = Vec::new();
        for (batch, dst) in masks.chunks(chunk).zip(out.chunks_mut(chunk * width)) {
            rows.clear();
            for m in batch {
                self.vf.extend_masked(&self.x, m, &mut rows)?;
            }
            let logits = self.net.logits_eval(&Tensor::matrix(batch.len() * per, n, rows.clone())?)?;
            let logits = logits.data();
            for (k, o) in dst.chunks_exact_mut(width).enumerate() {
                let mut acc = vec![0.0; d];
                for r in 0..per {
                    let row = &logits[(k * per + r) * d..(k * per + r + 1) * d];
                    for (a, v) in acc.iter_mut().zip(row) {
                        *a += v;
                    }
                }
                match self.outputs {
                    OutputSelection::All => {
                        for (o, a) in o.iter_mut().zip(&acc) {
                            *o = a / per as f64;
                        }
                    }
                    OutputSelection::One(j) => o[0] = acc[j] / per as f64,
                }
            }
        }
        Ok(())
    }
}

/// Memoizes another game's payoffs by coalition. Useful when the oracle
/// revisits the same coalitions many times (small `n`).
pub struct CachedGame<G> {
    inner: G,
    cache: RefCell<BTreeMap<CoalitionMask, Vec<f64>>>,
    misses: Cell<usize>,
}

impl<G: CoalitionGame> CachedGame<G> {
    pub fn new(inner: G) -> Self {
        Self {
            inner,
            cache: RefCell::new(BTreeMap::new()),
            misses: Cell::new(0),
        }
    }

    /// Distinct coalitions forwarded to the inner game so far.
    pub fn misses(&self) -> usize {
        self.misses.get()
    }
}

impl<G: CoalitionGame> CoalitionGame for CachedGame<G> {
    fn players(&self) -> usize {
        self.inner.players()
    }

    fn outputs(&self) -> usize {
        self.inner.outputs()
    }

    fn evaluate(&self, masks: &[CoalitionMask], out: &mut [f64]) -> Result<()> {
        let d = self.outputs();
        let mut cache = self.cache.borrow_mut();
        let mut todo: Vec<CoalitionMask> = Vec::new();
        for m in masks {
            if !cache.contains_key(m) && !todo.contains(m) {
                todo.push(m.clone());
            }
        }
        if !todo.is_empty() {
            let mut fresh = vec![0.0; todo.len() * d];
            self.inner.evaluate(&todo, &mut fresh)?;
            self.misses.set(self.misses.get() + todo.len());
            for (m, v) in todo.into_iter().zip(fresh.chunks_exact(d)) {
                cache.insert(m, v.to_vec());
            }
        }
        for (m, o) in masks.iter().zip(out.chunks_exact_mut(d)) {
            o.copy_from_slice(&cache[m]);
        }
        Ok(())
    }
}
