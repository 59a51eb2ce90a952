//! Residual error indicators steering goal-oriented mesh refinement.
//!
//! Each element gets a primal indicator from the source residual and flux
//! jumps of the solution, a dual indicator built the same way from the
//! quantity-of-interest weight and the dual solution, and their product
//! as the goal indicator. The total over all elements bounds the error in
//! the functional and drives the accuracy-level map of the hierarchy.

use super::fem::{composite_gauss, Mesh1d, QoiFunctional, GAUSS5};

/// Per-element refinement indicators and their goal-oriented combination.
#[derive(Clone, Debug)]
pub struct ElementIndicators {
    pub primal: Vec<f64>,
    pub dual: Vec<f64>,
    /// Product primal * dual per element; the marking criterion.
    pub goal: Vec<f64>,
    /// Sum of the goal indicators, the error proxy for the whole mesh.
    pub total: f64,
}

/// L2 norm of the source over one element by composite Gauss quadrature.
/// `panel_max` must resolve the narrowest feature of the source; a
/// coarse-element norm of the peaked functional weight is garbage
/// otherwise and destabilizes the marking.
fn source_norm(a: f64, b: f64, panel_max: f64, source: &mut impl FnMut(f64) -> f64) -> f64 {
    let sq = composite_gauss(&GAUSS5, a, b, panel_max, &mut |x| {
        let v = source(x);
        v * v
    });
    sq.max(0.0).sqrt()
}

/// Residual indicators of one solve: h * ||source|| on the element plus
/// sqrt(h) times the root mean square of the flux jumps at its interior
/// endpoints. Domain-boundary endpoints carry no jump term.
fn residual_indicators(
    mesh: &Mesh1d,
    k_elements: &[f64],
    nodal: &[f64],
    panel_max: f64,
    source: &mut impl FnMut(f64) -> f64,
) -> Vec<f64> {
    let elements = mesh.element_count();
    let fluxes: Vec<f64> = (0..elements)
        .map(|e| k_elements[e] * (nodal[e + 1] - nodal[e]) / mesh.diameter(e))
        .collect();
    // jumps[i] is the flux jump at interior node i+1.
    let jumps: Vec<f64> = (1..elements).map(|i| fluxes[i] - fluxes[i - 1]).collect();
    (0..elements)
        .map(|e| {
            let h = mesh.diameter(e);
            let mut jump_sq = 0.0;
            if e >= 1 {
                jump_sq += jumps[e - 1] * jumps[e - 1];
            }
            if e < elements - 1 {
                jump_sq += jumps[e] * jumps[e];
            }
            h * source_norm(mesh.nodes[e], mesh.nodes[e + 1], panel_max, source)
                + h.sqrt() * (0.5 * jump_sq).sqrt()
        })
        .collect()
}

/// Goal-oriented indicators from the primal and dual solutions.
pub fn error_indicators(
    mesh: &Mesh1d,
    k_elements: &[f64],
    primal_solution: &[f64],
    dual_solution: &[f64],
    f: &mut impl FnMut(f64) -> f64,
    qoi: &QoiFunctional,
) -> ElementIndicators {
    let primal = residual_indicators(mesh, k_elements, primal_solution, f64::INFINITY, f);
    let dual = residual_indicators(
        mesh,
        k_elements,
        dual_solution,
        qoi.panel_max(),
        &mut |x| qoi.weight(x),
    );
    let goal: Vec<f64> = primal.iter().zip(&dual).map(|(p, d)| p * d).collect();
    let total = goal.iter().sum();
    ElementIndicators {
        primal,
        dual,
        goal,
        total,
    }
}
