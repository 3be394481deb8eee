//! Per-layer vector field completion and the governing scalar field.

use log::warn;
use nalgebra::Vector2;
use thiserror::Error;

use crate::layer::LayerMesh;
use crate::slicer::{FaceField, FaceStatus};
use crate::sparse::{SolveError, SymmetricSystem};

pub const DEFAULT_SMOOTHING_ITERATIONS: usize = 50;
pub const DEFAULT_DENSITY_EXPONENT: f64 = 1.0;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("every face of the layer is undefined")]
    NoDefinedFaces,
    #[error("face {0} is defined but has a zero vector")]
    ZeroVector(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("scalar field solve failed: {0}")]
    Solve(#[from] SolveError),
}

/// Edge-connected components of faces: (component id per face, count).
fn edge_components(layer: &LayerMesh) -> (Vec<usize>, usize) {
    let n = layer.triangles.len();
    let mut comp = vec![usize::MAX; n];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        comp[start] = count;
        stack.push(start);
        while let Some(f) = stack.pop() {
            for &g in &layer.face_neighbors[f] {
                if comp[g] == usize::MAX {
                    comp[g] = count;
                    stack.push(g);
                }
            }
        }
        count += 1;
    }
    (comp, count)
}

/// Fills undefined faces and smooths defined ones by Jacobi averaging over
/// edge neighbours, holding the most stressed defined face of each
/// component fixed. Vectors are normalized once, after the last sweep.
///
/// Components with no defined face keep their faces undefined.
pub fn complete_and_smooth(ff: &FaceField, layer: &LayerMesh, iterations: usize) -> Result<FaceField, FieldError> {
    if iterations == 0 {
        return Err(FieldError::InvalidParameter("iterations must be at least 1"));
    }
    if ff.defined_count() == 0 {
        return Err(FieldError::NoDefinedFaces);
    }
    let n = ff.len();
    let (comp, ncomp) = edge_components(layer);
    let mut members = vec![Vec::new(); ncomp];
    for f in 0..n {
        members[comp[f]].push(f);
    }
    let mut pinned = vec![false; n];
    let mut active = vec![false; n];
    for faces in &members {
        match ff.max_sigma_defined(faces.iter().copied()) {
            Some(p) => {
                pinned[p] = true;
                for &f in faces {
                    active[f] = true;
                }
            }
            None => warn!(
                "{} faces in a component without any defined vector stay undefined",
                faces.len()
            ),
        }
    }

    let mut v: Vec<Vector2<f64>> = (0..n)
        .map(|f| match ff.status[f] {
            FaceStatus::Defined => ff.v[f],
            FaceStatus::Undefined => Vector2::zeros(),
        })
        .collect();
    let mut sigma = ff.sigma.clone();
    let mut next_v = v.clone();
    let mut next_sigma = sigma.clone();
    for _ in 0..iterations {
        for f in 0..n {
            let nb = &layer.face_neighbors[f];
            if pinned[f] || !active[f] || nb.is_empty() {
                next_v[f] = v[f];
                next_sigma[f] = sigma[f];
                continue;
            }
            let k = nb.len() as f64;
            next_v[f] = nb.iter().map(|&g| v[g]).sum::<Vector2<f64>>() / k;
            next_sigma[f] = nb.iter().map(|&g| sigma[g]).sum::<f64>() / k;
        }
        std::mem::swap(&mut v, &mut next_v);
        std::mem::swap(&mut sigma, &mut next_sigma);
    }

    let mut out = FaceField {
        v,
        sigma,
        u: vec![Vector2::zeros(); n],
        status: vec![FaceStatus::Undefined; n],
    };
    for f in 0..n {
        let norm = out.v[f].norm();
        if active[f] && norm > 1e-300 {
            out.v[f] /= norm;
            out.status[f] = FaceStatus::Defined;
        } else {
            out.v[f] = Vector2::zeros();
        }
    }
    Ok(out)
}

/// `sum_f mean_{g in N(f)} (sigma_f - sigma_g)^2`.
pub fn sigma_energy(sigma: &[f64], layer: &LayerMesh) -> f64 {
    (0..sigma.len())
        .filter(|&f| !layer.face_neighbors[f].is_empty())
        .map(|f| {
            let nb = &layer.face_neighbors[f];
            nb.iter().map(|&g| (sigma[f] - sigma[g]).powi(2)).sum::<f64>() / nb.len() as f64
        })
        .sum()
}

/// `sum_f mean_{g in N(f)} |v_f - v_g|^2`.
pub fn vector_energy(v: &[Vector2<f64>], layer: &LayerMesh) -> f64 {
    (0..v.len())
        .filter(|&f| !layer.face_neighbors[f].is_empty())
        .map(|f| {
            let nb = &layer.face_neighbors[f];
            nb.iter().map(|&g| (v[f] - v[g]).norm_squared()).sum::<f64>() / nb.len() as f64
        })
        .sum()
}

/// `u_f = sigma_f^p * v_f / |v_f|` on defined faces, zero elsewhere.
pub fn weight_vectors(ff: &FaceField, p: f64) -> Result<FaceField, FieldError> {
    if !(p >= 0.0) {
        return Err(FieldError::InvalidParameter("density exponent must be non-negative"));
    }
    let mut out = ff.clone();
    for f in 0..ff.len() {
        out.u[f] = match ff.status[f] {
            FaceStatus::Defined => {
                let norm = ff.v[f].norm();
                if norm == 0.0 {
                    return Err(FieldError::ZeroVector(f));
                }
                ff.sigma[f].powf(p) * ff.v[f] / norm
            }
            FaceStatus::Undefined => Vector2::zeros(),
        };
    }
    Ok(out)
}

/// Rotates every weighted vector a quarter turn counter-clockwise.
///
/// Fitting the scalar field to the rotated vectors makes its level sets run
/// along the tensile directions, with spacing inversely proportional to
/// `|u_f|`.
pub fn rotate_quarter_turn(ff: &FaceField) -> FaceField {
    let mut out = ff.clone();
    for u in &mut out.u {
        *u = Vector2::new(-u.y, u.x);
    }
    out
}

/// Piecewise-linear scalar field on a layer's vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub values: Vec<f64>,
    /// Final value of the (weighted) gradient-matching objective.
    pub residual: f64,
    /// Vertices pinned to zero, one per connected component.
    pub anchors: Vec<usize>,
}

impl ScalarField {
    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Least-squares fit of `grad s` to the per-face vectors `u_f`.
///
/// Minimizes `sum_f w_f |grad s|_f - u_f|^2` with `w_f` the face area (or 1
/// when `area_weight` is off). Each connected component is anchored at the
/// lowest-index vertex of its most stressed face.
pub fn solve_scalar_field(layer: &LayerMesh, ff: &FaceField, area_weight: bool) -> Result<ScalarField, FieldError> {
    let (comp, ncomp) = layer.face_components();
    let mut anchor_face: Vec<Option<usize>> = vec![None; ncomp];
    for (f, &c) in comp.iter().enumerate() {
        match anchor_face[c] {
            Some(b) if ff.sigma[b] >= ff.sigma[f] => {}
            _ => anchor_face[c] = Some(f),
        }
    }
    let anchors: Vec<usize> = anchor_face
        .iter()
        .map(|f| *layer.triangles[f.expect("component has a face")].iter().min().unwrap())
        .collect();

    let pins: Vec<(usize, f64)> = anchors.iter().map(|&a| (a, 0.0)).collect();
    let values = fit_gradient(layer, &ff.u, area_weight, &pins)?;
    let residual = gradient_residual(layer, &values, ff, area_weight);
    Ok(ScalarField {
        values,
        residual,
        anchors,
    })
}

/// Piecewise-linear `s` minimizing `sum_f w_f |grad s|_f - target_f|^2`
/// with the given vertex values imposed.
pub fn fit_gradient(
    layer: &LayerMesh,
    target: &[Vector2<f64>],
    area_weight: bool,
    pins: &[(usize, f64)],
) -> Result<Vec<f64>, SolveError> {
    let n = layer.vertices.len();
    let mut system = SymmetricSystem::new(n);
    let mut rhs = vec![0.0; n];
    for f in 0..layer.triangles.len() {
        let w = if area_weight { layer.face_area[f] } else { 1.0 };
        let g = layer.shape_gradients(f);
        let t = layer.triangles[f];
        for a in 0..3 {
            rhs[t[a]] += w * g[a].dot(&target[f]);
            for b in a..3 {
                system.add(t[a], t[b], w * g[a].dot(&g[b]));
            }
        }
    }
    system.solve_pinned(&rhs, pins)
}

/// `sum_f w_f |grad s|_f - u_f|^2`.
pub fn gradient_residual(layer: &LayerMesh, values: &[f64], ff: &FaceField, area_weight: bool) -> f64 {
    (0..layer.triangles.len())
        .map(|f| {
            let w = if area_weight { layer.face_area[f] } else { 1.0 };
            w * (layer.gradient(f, values) - ff.u[f]).norm_squared()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer::grid_layer;
    use nalgebra::Point2;

    fn field_on(layer: &LayerMesh, v: Vector2<f64>, sigma: f64) -> FaceField {
        let n = layer.triangles.len();
        FaceField {
            v: vec![v; n],
            sigma: vec![sigma; n],
            u: vec![Vector2::zeros(); n],
            status: vec![FaceStatus::Defined; n],
        }
    }

    #[test]
    fn uniform_field_is_fixed_point() {
        let layer = grid_layer(0.0, 1.0, 0.0, 1.0, 5, 5);
        let ff = field_on(&layer, Vector2::new(0.6, 0.8), 3.0);
        let out = complete_and_smooth(&ff, &layer, 50).unwrap();
        for f in 0..ff.len() {
            assert!((out.v[f] - ff.v[f]).norm() < 1e-15);
            assert_eq!(out.sigma[f], 3.0);
        }
    }

    #[test]
    fn single_source_fills_layer() {
        let layer = grid_layer(0.0, 1.0, 0.0, 1.0, 6, 6);
        let mut ff = field_on(&layer, Vector2::zeros(), 1.0);
        ff.status = vec![FaceStatus::Undefined; ff.len()];
        ff.status[7] = FaceStatus::Defined;
        ff.v[7] = Vector2::new(1.0, 0.0);
        let out = complete_and_smooth(&ff, &layer, 50).unwrap();
        for f in 0..ff.len() {
            assert_eq!(out.status[f], FaceStatus::Defined);
            assert!((out.v[f] - Vector2::new(1.0, 0.0)).norm() < 1e-3);
        }
    }

    #[test]
    fn two_face_sigma_reaches_pinned_value() {
        let layer = grid_layer(0.0, 1.0, 0.0, 1.0, 2, 2);
        let mut ff = field_on(&layer, Vector2::new(1.0, 0.0), 4.0);
        ff.sigma[1] = 2.0;
        let out = complete_and_smooth(&ff, &layer, 50).unwrap();
        assert_eq!(out.sigma[0], 4.0);
        assert!((out.sigma[1] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn all_undefined_is_an_error() {
        let layer = grid_layer(0.0, 1.0, 0.0, 1.0, 2, 2);
        let mut ff = field_on(&layer, Vector2::zeros(), 1.0);
        ff.status = vec![FaceStatus::Undefined; 2];
        assert!(matches!(
            complete_and_smooth(&ff, &layer, 50),
            Err(FieldError::NoDefinedFaces)
        ));
    }

    #[test]
    fn energies_do_not_increase() {
        let layer = grid_layer(0.0, 3.0, 0.0, 2.0, 9, 7);
        let n = layer.triangles.len();
        let mut ff = field_on(&layer, Vector2::zeros(), 1.0);
        for f in 0..n {
            let c = layer.centroid(f);
            ff.sigma[f] = 1.0 + (3.0 * c.x).sin().abs() + c.y;
            ff.v[f] = Vector2::new((2.0 * c.y).cos(), (c.x * c.y).sin());
            if f % 5 == 0 {
                ff.status[f] = FaceStatus::Undefined;
                ff.v[f] = Vector2::zeros();
            }
        }
        let mut prev = (sigma_energy(&ff.sigma, &layer), vector_energy(&ff.v, &layer));
        let mut cur = ff.clone();
        for _ in 0..30 {
            // one raw sweep without the final normalization
            let next = raw_sweep(&cur, &layer, &ff);
            let e = (sigma_energy(&next.sigma, &layer), vector_energy(&next.v, &layer));
            assert!(e.0 <= prev.0 * (1.0 + 1e-12), "{e:?} {prev:?}");
            assert!(e.1 <= prev.1 * (1.0 + 1e-12), "{e:?} {prev:?}");
            prev = e;
            cur = next;
        }
    }

    fn raw_sweep(cur: &FaceField, layer: &LayerMesh, initial: &FaceField) -> FaceField {
        let pin = initial.max_sigma_defined(0..initial.len()).unwrap();
        let mut next = cur.clone();
        for f in 0..cur.len() {
            if f == pin {
                continue;
            }
            let nb = &layer.face_neighbors[f];
            let k = nb.len() as f64;
            next.v[f] = nb.iter().map(|&g| cur.v[g]).sum::<Vector2<f64>>() / k;
            next.sigma[f] = nb.iter().map(|&g| cur.sigma[g]).sum::<f64>() / k;
        }
        next
    }

    #[test]
    fn weighting() {
        let layer = grid_layer(0.0, 1.0, 0.0, 1.0, 2, 2);
        let ff = field_on(&layer, Vector2::new(0.0, 1.0), 3.0);
        let w = weight_vectors(&ff, 1.0).unwrap();
        assert_eq!(w.u[0], Vector2::new(0.0, 3.0));
        let w = weight_vectors(&ff, 0.0).unwrap();
        assert_eq!(w.u[0].norm(), 1.0);
        let w = weight_vectors(&ff, 2.0).unwrap();
        assert!((w.u[0].norm() - 9.0).abs() < 1e-12);
        let mut bad = ff.clone();
        bad.v[1] = Vector2::zeros();
        assert!(matches!(weight_vectors(&bad, 1.0), Err(FieldError::ZeroVector(1))));
    }

    fn with_u(layer: &LayerMesh, u: impl Fn(Point2<f64>) -> Vector2<f64>) -> FaceField {
        let mut ff = field_on(layer, Vector2::new(1.0, 0.0), 1.0);
        for f in 0..ff.len() {
            ff.u[f] = u(layer.centroid(f));
        }
        ff
    }

    #[test]
    fn exact_gradients_are_recovered() {
        let layer = grid_layer(-1.0, 2.0, 0.5, 3.0, 7, 6);
        let ff = with_u(&layer, |_| Vector2::new(1.0, 0.0));
        let s = solve_scalar_field(&layer, &ff, true).unwrap();
        let a = layer.vertices[s.anchors[0]];
        assert_eq!(s.values[s.anchors[0]], 0.0);
        for (i, p) in layer.vertices.iter().enumerate() {
            assert!((s.values[i] - (p.x - a.x)).abs() < 1e-9);
        }
        assert!(s.residual < 1e-9);

        let ff = with_u(&layer, |_| Vector2::new(0.0, 2.5));
        let s = solve_scalar_field(&layer, &ff, false).unwrap();
        let a = layer.vertices[s.anchors[0]];
        for (i, p) in layer.vertices.iter().enumerate() {
            assert!((s.values[i] - 2.5 * (p.y - a.y)).abs() < 1e-9);
        }
    }

    #[test]
    fn scaling_covariance() {
        let layer = grid_layer(0.0, 1.0, 0.0, 1.0, 6, 6);
        let ff = with_u(&layer, |p| Vector2::new(-p.y, p.x));
        let s1 = solve_scalar_field(&layer, &ff, true).unwrap();
        let mut ff3 = ff.clone();
        for u in &mut ff3.u {
            *u *= 3.0;
        }
        let s3 = solve_scalar_field(&layer, &ff3, true).unwrap();
        for i in 0..s1.values.len() {
            assert!((s3.values[i] - 3.0 * s1.values[i]).abs() < 1e-12);
        }
    }
}
