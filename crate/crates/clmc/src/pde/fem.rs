//! Piecewise-linear finite elements on adaptive interval meshes.
//!
//! The primal problem is -(k u')' = f on [0, 1] with homogeneous
//! Dirichlet ends; the dual problem reuses the same symmetric matrix with
//! the quantity-of-interest functional as load. The coefficient is taken
//! element-constant at midpoints, making the stiffness matrix tridiagonal
//! and the solve a direct Thomas elimination.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FemError {
    #[error("mesh needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("mesh nodes must rise strictly from 0 to 1: {0}")]
    BadNodes(String),
    #[error("coefficient must be positive on element {element}, got {value}")]
    NonPositiveField { element: usize, value: f64 },
    #[error("expected {expected} per-element values, got {got}")]
    FieldLengthMismatch { expected: usize, got: usize },
    #[error("zero pivot in tridiagonal elimination at row {0}")]
    SingularPivot(usize),
}

/// Two-point Gauss rule on [-1, 1], exact through cubics.
const GAUSS2: [(f64, f64); 2] = [(-0.577_350_269_189_625_8, 1.0), (0.577_350_269_189_625_8, 1.0)];

/// Five-point Gauss rule on [-1, 1], exact through degree 9; used for the
/// sharply peaked quantity-of-interest weight.
pub(crate) const GAUSS5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_47),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_47),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_08),
    (0.906_179_845_938_664, 0.236_926_885_056_189_08),
];

/// Integrate `f` over [a, b] with the given rule.
fn gauss_integrate(rule: &[(f64, f64)], a: f64, b: f64, f: &mut impl FnMut(f64) -> f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    rule.iter().map(|&(t, w)| w * f(mid + half * t)).sum::<f64>() * half
}

/// Composite Gauss integration: split [a, b] into panels no wider than
/// `panel_max` so the rule resolves features narrower than the interval.
pub(crate) fn composite_gauss(
    rule: &[(f64, f64)],
    a: f64,
    b: f64,
    panel_max: f64,
    f: &mut impl FnMut(f64) -> f64,
) -> f64 {
    let panels = (((b - a) / panel_max).ceil() as usize).clamp(1, 4096);
    let width = (b - a) / panels as f64;
    (0..panels)
        .map(|p| {
            let left = a + p as f64 * width;
            gauss_integrate(rule, left, left + width, f)
        })
        .sum()
}

/// Interval mesh with fixed endpoints 0 and 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh1d {
    pub nodes: Vec<f64>,
}

impl Mesh1d {
    pub fn uniform(elements: usize) -> Mesh1d {
        assert!(elements >= 1);
        let nodes = (0..=elements)
            .map(|i| i as f64 / elements as f64)
            .collect();
        Mesh1d { nodes }
    }

    pub fn element_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn diameter(&self, element: usize) -> f64 {
        self.nodes[element + 1] - self.nodes[element]
    }

    pub fn midpoint(&self, element: usize) -> f64 {
        0.5 * (self.nodes[element] + self.nodes[element + 1])
    }

    pub fn validate(&self) -> Result<(), FemError> {
        if self.nodes.len() < 2 {
            return Err(FemError::TooFewNodes(self.nodes.len()));
        }
        if self.nodes[0] != 0.0 || *self.nodes.last().unwrap() != 1.0 {
            return Err(FemError::BadNodes(format!(
                "endpoints {} and {}",
                self.nodes[0],
                self.nodes.last().unwrap()
            )));
        }
        for (i, pair) in self.nodes.windows(2).enumerate() {
            if !(pair[1] > pair[0]) {
                return Err(FemError::BadNodes(format!(
                    "nodes {} and {} at position {i}",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(())
    }

    /// Bisect the listed elements at their midpoints. Indices refer to
    /// this mesh and must be unique; order is irrelevant.
    pub fn refine(&self, marked: &[usize]) -> Mesh1d {
        let mut split = vec![false; self.element_count()];
        for &m in marked {
            split[m] = true;
        }
        let mut nodes = Vec::with_capacity(self.nodes.len() + marked.len());
        for e in 0..self.element_count() {
            nodes.push(self.nodes[e]);
            if split[e] {
                nodes.push(self.midpoint(e));
            }
        }
        nodes.push(*self.nodes.last().unwrap());
        Mesh1d { nodes }
    }
}

/// Pick the ceil(theta * n) elements with the largest indicator, ties
/// resolved toward the leftmost element. Returned indices are ascending.
pub fn mark_elements(indicators: &[f64], theta: f64) -> Vec<usize> {
    assert!(theta > 0.0 && theta <= 1.0, "fraction {theta} out of (0, 1]");
    let n = indicators.len();
    let quota = ((theta * n as f64).ceil() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        indicators[b]
            .partial_cmp(&indicators[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut marked = order[..quota].to_vec();
    marked.sort_unstable();
    marked
}

/// Mollified point evaluation around `center`: the normalized weight
/// C1 exp(-(x - center)^2 / width) integrates to one over [0, 1].
#[derive(Clone, Copy, Debug)]
pub struct QoiFunctional {
    pub center: f64,
    pub width: f64,
    pub normalizer: f64,
}

impl QoiFunctional {
    /// The standard target: average solution value near x = 0.25.
    pub fn standard() -> QoiFunctional {
        QoiFunctional::new(0.25, 0.0005)
    }

    pub fn new(center: f64, width: f64) -> QoiFunctional {
        assert!(width > 0.0 && (0.0..=1.0).contains(&center));
        // The weight varies on scale sqrt(width); a composite Gauss rule on
        // a grid much finer than that is exact to machine precision.
        let cells = 4096;
        let mut integral = 0.0;
        for c in 0..cells {
            let a = c as f64 / cells as f64;
            let b = (c + 1) as f64 / cells as f64;
            integral += gauss_integrate(&GAUSS5, a, b, &mut |x| {
                (-(x - center) * (x - center) / width).exp()
            });
        }
        QoiFunctional {
            center,
            width,
            normalizer: 1.0 / integral,
        }
    }

    pub fn weight(&self, x: f64) -> f64 {
        self.normalizer * (-(x - self.center) * (x - self.center) / self.width).exp()
    }

    /// Widest quadrature panel that still resolves the weight. Elements
    /// are split into panels of at most this size when integrating
    /// against the weight, keeping coarse meshes accurate.
    pub(crate) fn panel_max(&self) -> f64 {
        (self.width.sqrt() / 8.0).min(1.0)
    }
}

/// Solution of the tridiagonal system: full nodal vector including the
/// zero Dirichlet ends.
fn thomas_solve(
    mut diag: Vec<f64>,
    upper: Vec<f64>,
    mut rhs: Vec<f64>,
) -> Result<Vec<f64>, FemError> {
    let n = diag.len();
    // The matrix is symmetric, so the lower diagonal equals the upper.
    for i in 1..n {
        let pivot = diag[i - 1];
        if pivot == 0.0 {
            return Err(FemError::SingularPivot(i - 1));
        }
        let factor = upper[i - 1] / pivot;
        diag[i] -= factor * upper[i - 1];
        rhs[i] -= factor * rhs[i - 1];
    }
    if diag[n - 1] == 0.0 {
        return Err(FemError::SingularPivot(n - 1));
    }
    let mut solution = vec![0.0; n];
    solution[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        solution[i] = (rhs[i] - upper[i] * solution[i + 1]) / diag[i];
    }
    Ok(solution)
}

/// Assemble and solve with a prescribed interior load vector. Returns the
/// full nodal solution with boundary zeros.
fn solve_with_load(mesh: &Mesh1d, k_elements: &[f64], load: Vec<f64>) -> Result<Vec<f64>, FemError> {
    let elements = mesh.element_count();
    if k_elements.len() != elements {
        return Err(FemError::FieldLengthMismatch {
            expected: elements,
            got: k_elements.len(),
        });
    }
    for (element, &k) in k_elements.iter().enumerate() {
        if !(k.is_finite() && k > 0.0) {
            return Err(FemError::NonPositiveField { element, value: k });
        }
    }
    let interior = elements - 1;
    if interior == 0 {
        return Ok(vec![0.0; 2]);
    }
    let mut diag = vec![0.0; interior];
    let mut upper = vec![0.0; interior.saturating_sub(1)];
    for e in 0..elements {
        let stiffness = k_elements[e] / mesh.diameter(e);
        // Element e couples nodes e and e+1; interior unknown i is node i+1.
        if e >= 1 {
            diag[e - 1] += stiffness;
        }
        if e < interior {
            diag[e] += stiffness;
        }
        if e >= 1 && e < interior {
            upper[e - 1] = -stiffness;
        }
    }
    let interior_solution = thomas_solve(diag, upper, load)?;
    let mut full = Vec::with_capacity(elements + 1);
    full.push(0.0);
    full.extend(interior_solution);
    full.push(0.0);
    Ok(full)
}

/// Interior load vector from a source function with the given rule,
/// splitting each element into panels of at most `panel_max`.
fn load_vector(
    mesh: &Mesh1d,
    rule: &[(f64, f64)],
    panel_max: f64,
    source: &mut impl FnMut(f64) -> f64,
) -> Vec<f64> {
    let elements = mesh.element_count();
    let mut load = vec![0.0; elements - 1];
    for e in 0..elements {
        let (a, b) = (mesh.nodes[e], mesh.nodes[e + 1]);
        let h = b - a;
        // Hat function of the left node falls, of the right node rises.
        if e >= 1 {
            load[e - 1] += composite_gauss(rule, a, b, panel_max, &mut |x| {
                source(x) * (b - x) / h
            });
        }
        if e < elements - 1 {
            load[e] += composite_gauss(rule, a, b, panel_max, &mut |x| {
                source(x) * (x - a) / h
            });
        }
    }
    load
}

/// Solve the primal problem -(k u')' = f with two-point Gauss load.
pub fn assemble_solve(
    mesh: &Mesh1d,
    k_elements: &[f64],
    f: &mut impl FnMut(f64) -> f64,
) -> Result<Vec<f64>, FemError> {
    mesh.validate()?;
    if mesh.element_count() < 2 {
        return Err(FemError::TooFewNodes(mesh.nodes.len()));
    }
    let load = load_vector(mesh, &GAUSS2, f64::INFINITY, f);
    solve_with_load(mesh, k_elements, load)
}

/// Solve the dual problem a(v, w) = Q(v): the same matrix with the
/// quantity-of-interest weight as load. The load shares its panel layout
/// with [`qoi_evaluate`] so the dual pairing identity holds to round-off.
pub fn solve_dual(
    mesh: &Mesh1d,
    k_elements: &[f64],
    qoi: &QoiFunctional,
) -> Result<Vec<f64>, FemError> {
    mesh.validate()?;
    if mesh.element_count() < 2 {
        return Err(FemError::TooFewNodes(mesh.nodes.len()));
    }
    let load = load_vector(mesh, &GAUSS5, qoi.panel_max(), &mut |x| qoi.weight(x));
    solve_with_load(mesh, k_elements, load)
}

/// Apply the functional to a nodal solution: C1 times the integral of the
/// weight against the piecewise-linear interpolant, by per-element Gauss
/// quadrature on panels fine enough for the peaked weight.
pub fn qoi_evaluate(mesh: &Mesh1d, nodal: &[f64], qoi: &QoiFunctional) -> f64 {
    let mut total = 0.0;
    for e in 0..mesh.element_count() {
        let (a, b) = (mesh.nodes[e], mesh.nodes[e + 1]);
        let h = b - a;
        let (ua, ub) = (nodal[e], nodal[e + 1]);
        total += composite_gauss(&GAUSS5, a, b, qoi.panel_max(), &mut |x| {
            qoi.weight(x) * (ua + (ub - ua) * (x - a) / h)
        });
    }
    total
}
