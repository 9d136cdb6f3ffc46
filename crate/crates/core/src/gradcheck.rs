//! Central-difference verification of analytic gradients.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::network::{Gradients, ShapNetwork};

/// A scalar loss over a network's parameters.
pub trait Objective {
    fn loss(&self, net: &mut ShapNetwork) -> Result<f64>;
    fn loss_and_grad(&self, net: &mut ShapNetwork) -> Result<(f64, Gradients)>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter with the largest error, as `layers.{k}[{index}]` or `delta`.
    pub worst: String,
    /// Analytic and central-difference values at `worst`.
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    /// Every comparison made, in probe order.
    pub probes: Vec<Probe>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub name: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

fn param_name(layer: Option<usize>, index: usize) -> String {
    match layer {
        Some(k) => format!("layers.{k}[{index}]"),
        None => String::from("delta"),
    }
}

/// Compares the analytic gradient with central differences for every
/// parameter (or every `stride`-th one) and returns the worst
/// `|a - fd| / max(|a|, |fd|, 1e-8)`.
pub fn gradient_check(net: &mut ShapNetwork, objective: &dyn Objective, step: f64, stride: usize) -> Result<GradCheckReport> {
    if !(step > 0.0 && step <= 1e-3) {
        return Err(Error::invalid(format!("finite-difference step {step} outside (0, 1e-3]")));
    }
    if net.layers().iter().flat_map(|l| l.params()).any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("network parameters".into()));
    }
    let stride = stride.max(1);
    let (_, grads) = objective.loss_and_grad(net)?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
        probes: Vec::new(),
    };

    let mut probe = |net: &mut ShapNetwork, layer: Option<usize>, index: usize, analytic: f64| -> Result<()> {
        let original = read(net, layer, index);
        let eval = |net: &mut ShapNetwork, value: f64| -> Result<f64> {
            write(net, layer, index, value);
            let l = objective.loss(net)?;
            if !l.is_finite() {
                write(net, layer, index, original);
                return Err(Error::NonFinite(format!(
                    "loss {l} after perturbing {}",
                    param_name(layer, index)
                )));
            }
            Ok(l)
        };
        let plus = eval(net, original + step)?;
        let minus = eval(net, original - step)?;
        write(net, layer, index, original);
        let fd = (plus - minus) / (2.0 * step);
        let err = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8);
        report.checked += 1;
        report.probes.push(Probe {
            name: param_name(layer, index),
            analytic,
            numeric: fd,
            rel_error: err,
        });
        if err > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = err;
            report.worst = param_name(layer, index);
            report.analytic = analytic;
            report.numeric = fd;
        }
        Ok(())
    };

    for (k, g) in grads.layers.iter().enumerate() {
        for index in (0..g.len()).step_by(stride) {
            probe(net, Some(k), index, g[index])?;
        }
    }
    if net.spec().relaxed {
        probe(net, None, 0, grads.delta)?;
    }
    Ok(report)
}

fn read(net: &ShapNetwork, layer: Option<usize>, index: usize) -> f64 {
    match layer {
        Some(k) => net.layers()[k].params()[index],
        None => net.delta(),
    }
}

fn write(net: &mut ShapNetwork, layer: Option<usize>, index: usize, value: f64) {
    match layer {
        Some(k) => net.layers_mut()[k].params_mut()[index] = value,
        None => net.set_delta(value).expect("relaxed network"),
    }
}
