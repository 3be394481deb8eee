//! Per-element tensile direction field.
//!
//! Turns stress tensors into one direction vector and one stress weight per
//! tetrahedron, makes the vector signs consistent by propagating along a
//! minimum spanning tree of the face-adjacency graph, and discards vectors
//! in turbulent regions.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::mesh::{SymTensor3, TetMesh};

/// Weight given to elements without a usable tensile direction.
pub const WEAK_STRESS: f64 = 1e-5;
pub const DEFAULT_MU: f64 = 3.0;
pub const DEFAULT_ETA: f64 = 0.5;

#[derive(Debug, Error)]
pub enum StressError {
    #[error("adjacency has not been built for this mesh")]
    NoAdjacency,
    #[error("{tensors} tensors for {tets} tets")]
    CountMismatch { tensors: usize, tets: usize },
    #[error("tensor {0} is not finite")]
    NonFinite(usize),
    #[error("field has no element with a direction vector")]
    NoVectors,
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

/// Eigen-decomposition of a stress tensor, ordered by descending `|value|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalStress {
    pub values: [f64; 3],
    pub directions: [Vector3<f64>; 3],
}

impl PrincipalStress {
    pub fn reconstruct(&self) -> Matrix3<f64> {
        (0..3).fold(Matrix3::zeros(), |acc, i| {
            let d = self.directions[i];
            acc + self.values[i] * d * d.transpose()
        })
    }
}

/// Cyclic Jacobi rotations on a symmetric 3x3 matrix. Returns eigenvalues
/// and the matrix whose columns are the corresponding unit eigenvectors.
fn jacobi_eigen(mut a: Matrix3<f64>) -> ([f64; 3], Matrix3<f64>) {
    let mut v = Matrix3::identity();
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return ([0.0; 3], v);
    }
    for _sweep in 0..64 {
        let off = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        if off <= (f64::EPSILON * scale).powi(2) * 1e-4 {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[(p, q)];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut rot = Matrix3::identity();
            rot[(p, p)] = c;
            rot[(q, q)] = c;
            rot[(p, q)] = s;
            rot[(q, p)] = -s;
            a = rot.transpose() * a * rot;
            a[(p, q)] = 0.0;
            a[(q, p)] = 0.0;
            v *= rot;
        }
    }
    ([a[(0, 0)], a[(1, 1)], a[(2, 2)]], v)
}

pub fn principal_decompose(t: &SymTensor3) -> PrincipalStress {
    let (vals, vecs) = jacobi_eigen(t.to_matrix());
    let mut order = [0usize, 1, 2];
    // Stable, so equal magnitudes keep the rotation order.
    order.sort_by(|&i, &j| vals[j].abs().total_cmp(&vals[i].abs()));
    PrincipalStress {
        values: order.map(|i| vals[i]),
        directions: order.map(|i| vecs.column(i).normalize()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementStatus {
    Defined,
    Undefined,
    /// No dominant tension; carries the major principal direction and [`WEAK_STRESS`].
    Weak,
}

impl ElementStatus {
    pub fn has_vector(self) -> bool {
        !matches!(self, ElementStatus::Undefined)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ElementStatus::Defined => "defined",
            ElementStatus::Undefined => "undefined",
            ElementStatus::Weak => "weak",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensileChoice {
    pub vector: Vector3<f64>,
    pub sigma: f64,
    pub status: ElementStatus,
}

/// Picks the tensile direction of one element.
///
/// Tension in the major principal stress wins outright. If the major stress
/// is compressive, the second one is used when it is tensile and not
/// dwarfed by the compression (`|s1 / s2| < mu`). Anything else is weak.
pub fn select_tensile_vector(p: &PrincipalStress, mu: f64) -> TensileChoice {
    let [s1, s2, _] = p.values;
    if s1 > 0.0 {
        TensileChoice {
            vector: p.directions[0],
            sigma: s1,
            status: ElementStatus::Defined,
        }
    } else if s1 < 0.0 && s2 > 0.0 && (s1 / s2).abs() < mu {
        TensileChoice {
            vector: p.directions[1],
            sigma: s2,
            status: ElementStatus::Defined,
        }
    } else {
        TensileChoice {
            vector: p.directions[0],
            sigma: WEAK_STRESS,
            status: ElementStatus::Weak,
        }
    }
}

/// Direction, weight and status per tetrahedron.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementField {
    pub vectors: Vec<Vector3<f64>>,
    pub sigma: Vec<f64>,
    pub status: Vec<ElementStatus>,
}

impl ElementField {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn from_choices(choices: impl IntoIterator<Item = TensileChoice>) -> Self {
        let mut f = ElementField {
            vectors: Vec::new(),
            sigma: Vec::new(),
            status: Vec::new(),
        };
        for c in choices {
            f.vectors.push(c.vector);
            f.sigma.push(c.sigma);
            f.status.push(c.status);
        }
        f
    }

    pub fn count(&self, status: ElementStatus) -> usize {
        self.status.iter().filter(|&&s| s == status).count()
    }

    /// `<id> <status> <vx> <vy> <vz> <sigma>` per element.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for i in 0..self.len() {
            let v = self.vectors[i];
            let _ = writeln!(
                out,
                "{i} {} {} {} {} {}",
                self.status[i].as_str(),
                v.x,
                v.y,
                v.z,
                self.sigma[i]
            );
        }
        out
    }
}

/// MST edge weight, `1 - |cos|` between two directions.
pub fn edge_weight(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let c = a.normalize().dot(&b.normalize()).abs().min(1.0);
    1.0 - c
}

#[derive(Debug, Clone, Copy)]
struct Frontier {
    weight: f64,
    node: usize,
    parent: usize,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Frontier {}
impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Frontier {
    // Reversed for a min-heap; ties broken by lower node, then lower parent.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .weight
            .total_cmp(&self.weight)
            .then_with(|| other.node.cmp(&self.node))
            .then_with(|| other.parent.cmp(&self.parent))
    }
}

/// Makes vector signs consistent by visiting elements in Prim order.
///
/// Each connected component of the face-adjacency graph (restricted to
/// elements with a vector) is seeded at its most stressed element and keeps
/// the seed's sign. An element is flipped when it disagrees with the tree
/// neighbour it was reached from.
pub fn reorient_mst(field: &ElementField, mesh: &TetMesh) -> Result<ElementField, StressError> {
    if !mesh.adjacency_built() {
        return Err(StressError::NoAdjacency);
    }
    let n = field.len();
    if n != mesh.tets.len() {
        return Err(StressError::CountMismatch {
            tensors: n,
            tets: mesh.tets.len(),
        });
    }
    let mut seeds: Vec<usize> = (0..n).filter(|&i| field.status[i].has_vector()).collect();
    if seeds.is_empty() {
        return Err(StressError::NoVectors);
    }
    seeds.sort_by(|&a, &b| field.sigma[b].total_cmp(&field.sigma[a]).then(a.cmp(&b)));

    let mut out = field.clone();
    let mut visited = vec![false; n];
    let mut heap = BinaryHeap::new();
    for seed in seeds {
        if visited[seed] {
            continue;
        }
        visited[seed] = true;
        push_neighbours(seed, &out, mesh, &visited, &mut heap);
        while let Some(Frontier { node, parent, .. }) = heap.pop() {
            if visited[node] {
                continue;
            }
            visited[node] = true;
            if out.vectors[parent].dot(&out.vectors[node]) < 0.0 {
                out.vectors[node] = -out.vectors[node];
            }
            push_neighbours(node, &out, mesh, &visited, &mut heap);
        }
    }
    Ok(out)
}

fn push_neighbours(
    from: usize,
    field: &ElementField,
    mesh: &TetMesh,
    visited: &[bool],
    heap: &mut BinaryHeap<Frontier>,
) {
    for &nb in &mesh.face_adjacency[from] {
        if !visited[nb] && field.status[nb].has_vector() {
            heap.push(Frontier {
                weight: edge_weight(&field.vectors[from], &field.vectors[nb]),
                node: nb,
                parent: from,
            });
        }
    }
}

/// Marks an element undefined when its vector disagrees (`dot <= eta`) with
/// every vertex-sharing neighbour that has a vector. Reads the input field
/// only, so removals do not cascade. Stress weights are kept.
pub fn remove_incompatible(field: &ElementField, mesh: &TetMesh, eta: f64) -> Result<ElementField, StressError> {
    if !mesh.adjacency_built() {
        return Err(StressError::NoAdjacency);
    }
    let flags: Vec<bool> = (0..field.len())
        .into_par_iter()
        .map(|e| {
            if !field.status[e].has_vector() {
                return false;
            }
            let mut any = false;
            for &nb in &mesh.vertex_adjacency[e] {
                if !field.status[nb].has_vector() {
                    continue;
                }
                any = true;
                if field.vectors[e].dot(&field.vectors[nb]) > eta {
                    return false;
                }
            }
            any
        })
        .collect();
    let mut out = field.clone();
    for (e, remove) in flags.into_iter().enumerate() {
        if remove {
            out.status[e] = ElementStatus::Undefined;
        }
    }
    Ok(out)
}

/// Dot products over all vertex-sharing element pairs that both carry a vector.
pub fn neighbour_dots(field: &ElementField, mesh: &TetMesh) -> Vec<f64> {
    let mut dots = Vec::new();
    for e in 0..field.len() {
        if !field.status[e].has_vector() {
            continue;
        }
        for &nb in &mesh.vertex_adjacency[e] {
            if nb > e && field.status[nb].has_vector() {
                dots.push(field.vectors[e].dot(&field.vectors[nb]));
            }
        }
    }
    dots
}

pub fn compute_element_field(
    mesh: &TetMesh,
    tensors: &[SymTensor3],
    mu: f64,
    eta: f64,
) -> Result<ElementField, StressError> {
    if mu <= 0.0 {
        return Err(StressError::InvalidParameter("mu must be positive"));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(StressError::InvalidParameter("eta must lie in (0, 1)"));
    }
    if tensors.len() != mesh.tets.len() {
        return Err(StressError::CountMismatch {
            tensors: tensors.len(),
            tets: mesh.tets.len(),
        });
    }
    if let Some(i) = tensors.iter().position(|t| !t.is_finite()) {
        return Err(StressError::NonFinite(i));
    }
    let choices: Vec<TensileChoice> = tensors
        .par_iter()
        .map(|t| select_tensile_vector(&principal_decompose(t), mu))
        .collect();
    let field = ElementField::from_choices(choices);
    let field = reorient_mst(&field, mesh)?;
    remove_incompatible(&field, mesh, eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::parse_tet_mesh;
    use proptest::prelude::*;

    fn ps(values: [f64; 3]) -> PrincipalStress {
        PrincipalStress {
            values,
            directions: [Vector3::x(), Vector3::y(), Vector3::z()],
        }
    }

    #[test]
    fn diagonal_tensor() {
        let p = principal_decompose(&SymTensor3::diag(5.0, -1.0, 0.0));
        assert_eq!(p.values, [5.0, -1.0, 0.0]);
        assert!((p.directions[0].x.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn isotropic_tensor() {
        let p = principal_decompose(&SymTensor3::diag(2.5, 2.5, 2.5));
        assert_eq!(p.values, [2.5; 3]);
        for i in 0..3 {
            assert!((p.directions[i].norm() - 1.0).abs() < 1e-12);
            for j in i + 1..3 {
                assert!(p.directions[i].dot(&p.directions[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_tensor() {
        let p = principal_decompose(&SymTensor3::default());
        assert_eq!(p.values, [0.0; 3]);
        let c = select_tensile_vector(&p, DEFAULT_MU);
        assert_eq!(c.status, ElementStatus::Weak);
    }

    #[test]
    fn selection_rules() {
        let c = select_tensile_vector(&ps([5.0, -1.0, 0.0]), 3.0);
        assert_eq!(
            (c.vector, c.sigma, c.status),
            (Vector3::x(), 5.0, ElementStatus::Defined)
        );
        let c = select_tensile_vector(&ps([-4.0, 2.0, 0.0]), 3.0);
        assert_eq!(
            (c.vector, c.sigma, c.status),
            (Vector3::y(), 2.0, ElementStatus::Defined)
        );
        let c = select_tensile_vector(&ps([-10.0, 2.0, 0.0]), 3.0);
        assert_eq!(
            (c.vector, c.sigma, c.status),
            (Vector3::x(), WEAK_STRESS, ElementStatus::Weak)
        );
        // ratio exactly mu is not below it
        let c = select_tensile_vector(&ps([-6.0, 2.0, 0.0]), 3.0);
        assert_eq!(c.status, ElementStatus::Weak);
        let c = select_tensile_vector(&ps([-6.0, -2.0, 1.0]), 3.0);
        assert_eq!(c.status, ElementStatus::Weak);
    }

    fn random_tensor() -> impl Strategy<Value = SymTensor3> {
        prop::array::uniform6(-100.0f64..100.0).prop_map(|c| SymTensor3::new(c[0], c[1], c[2], c[3], c[4], c[5]))
    }

    proptest! {
        #[test]
        fn decomposition_reconstructs(t in random_tensor()) {
            let p = principal_decompose(&t);
            let m = t.to_matrix();
            let err = (p.reconstruct() - m).norm();
            prop_assert!(err <= 1e-6 * m.norm().max(1e-12));
            prop_assert!(p.values[0].abs() >= p.values[1].abs());
            prop_assert!(p.values[1].abs() >= p.values[2].abs());
            for i in 0..3 {
                prop_assert!((p.directions[i].norm() - 1.0).abs() < 1e-9);
                for j in i + 1..3 {
                    prop_assert!(p.directions[i].dot(&p.directions[j]).abs() < 1e-6);
                }
            }
        }

        #[test]
        fn every_sign_pattern_gets_one_rule(s1 in -10.0f64..10.0, s2 in -10.0f64..10.0, mu in 0.1f64..10.0) {
            let (a, b) = if s1.abs() >= s2.abs() { (s1, s2) } else { (s2, s1) };
            let c = select_tensile_vector(&ps([a, b, 0.0]), mu);
            let rule1 = a > 0.0;
            let rule2 = !rule1 && a < 0.0 && b > 0.0 && (a / b).abs() < mu;
            match c.status {
                ElementStatus::Defined if rule1 => prop_assert_eq!(c.sigma, a),
                ElementStatus::Defined => { prop_assert!(rule2); prop_assert_eq!(c.sigma, b) }
                ElementStatus::Weak => { prop_assert!(!rule1 && !rule2); prop_assert_eq!(c.sigma, WEAK_STRESS) }
                ElementStatus::Undefined => prop_assert!(false),
            }
        }

        #[test]
        fn edge_weight_range(a in prop::array::uniform3(-1.0f64..1.0), b in prop::array::uniform3(-1.0f64..1.0)) {
            let a = Vector3::from(a);
            let b = Vector3::from(b);
            prop_assume!(a.norm() > 1e-3 && b.norm() > 1e-3);
            let w = edge_weight(&a, &b);
            prop_assert!((0.0..=1.0).contains(&w));
            prop_assert!(edge_weight(&a, &(-2.0 * a)) < 1e-12);
        }
    }

    fn pair_mesh() -> TetMesh {
        parse_tet_mesh("tetmesh v1 5 2\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nv 0 0 -1\nt 0 1 2 3\nt 0 2 1 4\n")
            .unwrap()
            .build_adjacency()
            .unwrap()
    }

    fn field(vs: &[Vector3<f64>], sigma: &[f64]) -> ElementField {
        ElementField {
            vectors: vs.to_vec(),
            sigma: sigma.to_vec(),
            status: vec![ElementStatus::Defined; vs.len()],
        }
    }

    #[test]
    fn antiparallel_pair_flipped() {
        let mesh = pair_mesh();
        let f = field(&[Vector3::x(), -Vector3::x()], &[2.0, 1.0]);
        let out = reorient_mst(&f, &mesh).unwrap();
        assert_eq!(out.vectors, vec![Vector3::x(), Vector3::x()]);
        // seed is the most stressed element, whose sign is kept
        let f = field(&[Vector3::x(), -Vector3::x()], &[1.0, 2.0]);
        let out = reorient_mst(&f, &mesh).unwrap();
        assert_eq!(out.vectors, vec![-Vector3::x(), -Vector3::x()]);
    }

    #[test]
    fn consistent_field_is_fixed_point() {
        let mesh = pair_mesh();
        let f = field(&[Vector3::x(), Vector3::new(0.8, 0.6, 0.0)], &[1.0, 1.0]);
        assert_eq!(reorient_mst(&f, &mesh).unwrap(), f);
    }

    #[test]
    fn reorient_requires_vectors_and_adjacency() {
        let mesh = pair_mesh();
        let mut f = field(&[Vector3::x(), Vector3::x()], &[1.0, 1.0]);
        f.status = vec![ElementStatus::Undefined; 2];
        assert!(matches!(reorient_mst(&f, &mesh), Err(StressError::NoVectors)));
        let raw =
            parse_tet_mesh("tetmesh v1 5 2\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nv 0 0 -1\nt 0 1 2 3\nt 0 2 1 4\n")
                .unwrap();
        let f = field(&[Vector3::x(), Vector3::x()], &[1.0, 1.0]);
        assert!(matches!(reorient_mst(&f, &raw), Err(StressError::NoAdjacency)));
    }

    fn at_angle(deg: f64) -> Vector3<f64> {
        let r = deg.to_radians();
        Vector3::new(r.cos(), r.sin(), 0.0)
    }

    #[test]
    fn removal_rules() {
        let mesh = pair_mesh();
        // 70 degrees apart: both sides see only an incompatible neighbour
        let f = field(&[at_angle(0.0), at_angle(70.0)], &[3.0, 2.0]);
        let out = remove_incompatible(&f, &mesh, 0.5).unwrap();
        assert_eq!(out.status, vec![ElementStatus::Undefined; 2]);
        assert_eq!(out.sigma, vec![3.0, 2.0]);
        let f = field(&[at_angle(0.0), at_angle(10.0)], &[3.0, 2.0]);
        let out = remove_incompatible(&f, &mesh, 0.5).unwrap();
        assert_eq!(out.status, vec![ElementStatus::Defined; 2]);
        // no defined neighbour: unchanged
        let mut f = field(&[at_angle(0.0), at_angle(90.0)], &[3.0, 2.0]);
        f.status[1] = ElementStatus::Undefined;
        let out = remove_incompatible(&f, &mesh, 0.5).unwrap();
        assert_eq!(out.status[0], ElementStatus::Defined);
    }

    #[test]
    fn uniform_fields() {
        let mesh = pair_mesh();
        let tension = vec![SymTensor3::diag(7.0, 0.0, 0.0); 2];
        let f = compute_element_field(&mesh, &tension, 3.0, 0.5).unwrap();
        assert_eq!(f.count(ElementStatus::Defined), 2);
        assert_eq!(f.sigma, vec![7.0, 7.0]);
        assert!(f.vectors.iter().all(|v| (v.x.abs() - 1.0).abs() < 1e-12));
        assert!(f.vectors[0].dot(&f.vectors[1]) > 0.0);

        let hydro = vec![SymTensor3::diag(-4.0, -4.0, -4.0); 2];
        let f = compute_element_field(&mesh, &hydro, 3.0, 0.5).unwrap();
        assert_eq!(f.count(ElementStatus::Weak), 2);
        assert_eq!(f.sigma, vec![WEAK_STRESS; 2]);
    }

    #[test]
    fn dump_format() {
        let f = field(&[Vector3::x()], &[2.0]);
        assert_eq!(f.dump(), "0 defined 1 0 0 2\n");
    }
}
