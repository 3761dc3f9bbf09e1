//! Reduced SMPL-style parametric body.
//!
//! A posed mesh is produced in four steps: shape blendshapes displace the
//! template, the joint regressor places the rest joints, pose blendshapes add
//! pose-dependent corrections, and linear blend skinning applies the forward
//! kinematics of the joint tree. The root translation is added last.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::renderer::Camera;
use crate::{Error, Mat3, Result, Vec2, Vec3};

const ROW_SUM_TOL: f64 = 1e-6;
const TOY_MODEL_JSON: &str = include_str!("../assets/toy_body.json");

/// On-disk layout of a body model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BodyModelFile {
    pub template_vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
    /// `N x 3 x S`
    pub shape_blendshapes: Vec<Vec<Vec<f64>>>,
    /// `J x N`
    pub joint_regressor: Vec<Vec<f64>>,
    /// `N x J`
    pub skinning_weights: Vec<Vec<f64>>,
    /// Root is `-1`.
    pub kinematic_parents: Vec<i64>,
    /// `N x 3 x 9(J-1)`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose_blendshapes: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default)]
    pub head_joint_ids: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct BodyModelData {
    template_vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    num_shape: usize,
    /// Flattened `[vertex][axis][coeff]`.
    shape_blendshapes: Vec<f64>,
    /// Flattened `[joint][vertex]`.
    joint_regressor: Vec<f64>,
    /// Flattened `[vertex][joint]`.
    skinning_weights: Vec<f64>,
    parents: Vec<Option<usize>>,
    root: usize,
    /// Joints ordered so every parent precedes its children.
    topo_order: Vec<usize>,
    /// Flattened `[vertex][axis][feature]`, `9 * (J - 1)` features.
    pose_blendshapes: Option<Vec<f64>>,
    head_joint_ids: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyParams {
    /// Shape coefficients (beta).
    pub shape: Vec<f64>,
    /// Axis-angle rotation per joint, radians.
    pub pose: Vec<[f64; 3]>,
    /// Camera-space root translation, metres.
    pub root_translation: [f64; 3],
}

impl BodyParams {
    /// Zero shape, rest pose, zero translation.
    pub fn rest(model: &BodyModelData) -> Self {
        Self {
            shape: vec![0.0; model.num_shape_coeffs()],
            pose: vec![[0.0; 3]; model.num_joints()],
            root_translation: [0.0; 3],
        }
    }

    pub fn translation(&self) -> Vec3 {
        Vec3::from(self.root_translation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    pub vertex_normals: Vec<Vec3>,
}

impl Mesh {
    /// Builds a mesh and computes area-weighted vertex normals. Vertices with
    /// no incident face get `+z`.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Self {
        let vertex_normals = area_weighted_normals(&vertices, &faces);
        Self {
            vertices,
            faces,
            vertex_normals,
        }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new(), Vec::new())
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn translated(&self, offset: Vec3) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| v + offset).collect(),
            faces: self.faces.clone(),
            vertex_normals: self.vertex_normals.clone(),
        }
    }

    /// Concatenates meshes, re-indexing faces.
    pub fn merge<'a>(meshes: impl IntoIterator<Item = &'a Mesh>) -> Mesh {
        let mut out = Mesh::empty();
        for m in meshes {
            let base = out.vertices.len();
            out.vertices.extend_from_slice(&m.vertices);
            out.vertex_normals.extend_from_slice(&m.vertex_normals);
            out.faces
                .extend(m.faces.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
        }
        out
    }
}

fn area_weighted_normals(vertices: &[Vec3], faces: &[[usize; 3]]) -> Vec<Vec3> {
    let mut acc = vec![Vec3::zeros(); vertices.len()];
    for f in faces {
        // Unnormalized cross product has length 2 * area.
        let n = (vertices[f[1]] - vertices[f[0]]).cross(&(vertices[f[2]] - vertices[f[0]]));
        for &v in f {
            acc[v] += n;
        }
    }
    acc.into_iter()
        .map(|n| {
            let len = n.norm();
            if len > 0.0 {
                n / len
            } else {
                Vec3::z()
            }
        })
        .collect()
}

/// Rotation matrix of an axis-angle vector (Rodrigues). Below `1e-8` rad the
/// second-order expansion `I + K + K^2 / 2` is used.
pub fn axis_angle_to_matrix(v: Vec3) -> Mat3 {
    let theta = v.norm();
    if theta < 1e-8 {
        let k = v.cross_matrix();
        return Mat3::identity() + k + 0.5 * k * k;
    }
    let k = (v / theta).cross_matrix();
    Mat3::identity() + theta.sin() * k + (1.0 - theta.cos()) * k * k
}

/// Rigid transform `x -> rotation * x + translation`.
#[derive(Debug, Clone, Copy)]
struct Rigid {
    rotation: Mat3,
    translation: Vec3,
}

impl Rigid {
    fn compose(&self, local: &Rigid) -> Rigid {
        Rigid {
            rotation: self.rotation * local.rotation,
            translation: self.rotation * local.translation + self.translation,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PosedBody {
    pub mesh: Mesh,
    /// World-space joint positions including the root translation.
    pub joints: Vec<Vec3>,
}

impl BodyModelData {
    pub fn from_file(file: BodyModelFile) -> Result<Self> {
        let n = file.template_vertices.len();
        let j = file.kinematic_parents.len();
        if n == 0 {
            return Err(Error::BodyModel("template has no vertices".into()));
        }
        if j == 0 {
            return Err(Error::BodyModel("kinematic tree has no joints".into()));
        }
        let template_vertices: Vec<Vec3> = file.template_vertices.iter().map(|&v| Vec3::from(v)).collect();

        for (fi, f) in file.faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(Error::BodyModel(format!("face {fi} references a vertex outside 0..{n}")));
            }
        }

        if file.shape_blendshapes.len() != n {
            return Err(Error::BodyModel(format!(
                "shape_blendshapes has {} vertex rows, template has {n}",
                file.shape_blendshapes.len()
            )));
        }
        let num_shape = file
            .shape_blendshapes
            .first()
            .and_then(|axes| axes.first())
            .map_or(0, |c| c.len());
        let mut shape_blendshapes = Vec::with_capacity(n * 3 * num_shape);
        for (vi, axes) in file.shape_blendshapes.iter().enumerate() {
            if axes.len() != 3 || axes.iter().any(|c| c.len() != num_shape) {
                return Err(Error::BodyModel(format!(
                    "shape_blendshapes row {vi} is not 3 x {num_shape}"
                )));
            }
            for c in axes {
                shape_blendshapes.extend_from_slice(c);
            }
        }

        if file.joint_regressor.len() != j {
            return Err(Error::BodyModel(format!(
                "joint_regressor has {} rows for {j} joints",
                file.joint_regressor.len()
            )));
        }
        let mut joint_regressor = Vec::with_capacity(j * n);
        for (ji, row) in file.joint_regressor.iter().enumerate() {
            if row.len() != n {
                return Err(Error::BodyModel(format!(
                    "joint_regressor row {ji} has {} entries for {n} vertices",
                    row.len()
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::BodyModel(format!("joint_regressor row {ji} sums to {sum}")));
            }
            joint_regressor.extend_from_slice(row);
        }

        if file.skinning_weights.len() != n {
            return Err(Error::BodyModel(format!(
                "skinning_weights has {} rows for {n} vertices",
                file.skinning_weights.len()
            )));
        }
        let mut skinning_weights = Vec::with_capacity(n * j);
        for (vi, row) in file.skinning_weights.iter().enumerate() {
            if row.len() != j {
                return Err(Error::BodyModel(format!(
                    "skinning_weights row {vi} has {} entries for {j} joints",
                    row.len()
                )));
            }
            if row.iter().any(|&w| w < 0.0 || !w.is_finite()) {
                return Err(Error::BodyModel(format!("skinning_weights row {vi} has a negative weight")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::BodyModel(format!("skinning_weights row {vi} sums to {sum}")));
            }
            skinning_weights.extend_from_slice(row);
        }

        let (parents, root, topo_order) = validate_tree(&file.kinematic_parents)?;

        let pose_blendshapes = match &file.pose_blendshapes {
            None => None,
            Some(p) => {
                let features = 9 * (j - 1);
                if p.len() != n {
                    return Err(Error::BodyModel(format!(
                        "pose_blendshapes has {} vertex rows, template has {n}",
                        p.len()
                    )));
                }
                let mut flat = Vec::with_capacity(n * 3 * features);
                for (vi, axes) in p.iter().enumerate() {
                    if axes.len() != 3 || axes.iter().any(|c| c.len() != features) {
                        return Err(Error::BodyModel(format!(
                            "pose_blendshapes row {vi} is not 3 x {features}"
                        )));
                    }
                    for c in axes {
                        flat.extend_from_slice(c);
                    }
                }
                Some(flat)
            }
        };

        let head_joint_ids: BTreeSet<usize> = file.head_joint_ids.iter().copied().collect();
        if let Some(&bad) = head_joint_ids.iter().find(|&&h| h >= j) {
            return Err(Error::BodyModel(format!("head joint id {bad} out of range")));
        }

        Ok(Self {
            template_vertices,
            faces: file.faces,
            num_shape,
            shape_blendshapes,
            joint_regressor,
            skinning_weights,
            parents,
            root,
            topo_order,
            pose_blendshapes,
            head_joint_ids,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: BodyModelFile =
            serde_json::from_str(text).map_err(|e| Error::json("body model", e))?;
        Self::from_file(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: BodyModelFile =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        Self::from_file(file)
    }

    /// Bundled fixture: 5 joints (pelvis, spine, head, two hips), 32 vertices
    /// forming four boxes, two shape coefficients (height, girth), no pose
    /// blendshapes. Z is up; units are metres.
    pub fn toy() -> Self {
        Self::from_json(TOY_MODEL_JSON).expect("bundled toy model is valid")
    }

    pub fn toy_json() -> &'static str {
        TOY_MODEL_JSON
    }

    pub fn num_vertices(&self) -> usize {
        self.template_vertices.len()
    }

    pub fn num_joints(&self) -> usize {
        self.parents.len()
    }

    pub fn num_shape_coeffs(&self) -> usize {
        self.num_shape
    }

    pub fn template_vertices(&self) -> &[Vec3] {
        &self.template_vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn root_joint(&self) -> usize {
        self.root
    }

    pub fn head_joint_ids(&self) -> &BTreeSet<usize> {
        &self.head_joint_ids
    }

    pub fn skinning_weight(&self, vertex: usize, joint: usize) -> f64 {
        self.skinning_weights[vertex * self.num_joints() + joint]
    }

    pub fn regressor_weight(&self, joint: usize, vertex: usize) -> f64 {
        self.joint_regressor[joint * self.num_vertices() + vertex]
    }

    fn check_shape(&self, shape: &[f64]) -> Result<()> {
        if shape.len() != self.num_shape {
            return Err(Error::Dimension(format!(
                "shape has {} coefficients, model expects {}",
                shape.len(),
                self.num_shape
            )));
        }
        Ok(())
    }

    fn check_params(&self, params: &BodyParams) -> Result<()> {
        self.check_shape(&params.shape)?;
        if params.pose.len() != self.num_joints() {
            return Err(Error::Dimension(format!(
                "pose has {} joints, model expects {}",
                params.pose.len(),
                self.num_joints()
            )));
        }
        Ok(())
    }

    /// Template displaced by the shape blendshapes.
    pub fn shaped_vertices(&self, shape: &[f64]) -> Result<Vec<Vec3>> {
        self.check_shape(shape)?;
        let s = self.num_shape;
        Ok(self
            .template_vertices
            .iter()
            .enumerate()
            .map(|(vi, v)| {
                let mut out = *v;
                for axis in 0..3 {
                    let base = (vi * 3 + axis) * s;
                    let coeffs = &self.shape_blendshapes[base..base + s];
                    out[axis] += coeffs.iter().zip(shape).map(|(b, beta)| b * beta).sum::<f64>();
                }
                out
            })
            .collect())
    }

    fn regress(&self, vertices: &[Vec3]) -> Vec<Vec3> {
        let n = self.num_vertices();
        (0..self.num_joints())
            .map(|j| {
                let row = &self.joint_regressor[j * n..(j + 1) * n];
                row.iter().zip(vertices).fold(Vec3::zeros(), |acc, (w, v)| acc + *w * v)
            })
            .collect()
    }

    /// Rest-pose joint locations for a shape.
    pub fn regress_joints(&self, shape: &[f64]) -> Result<Vec<Vec3>> {
        Ok(self.regress(&self.shaped_vertices(shape)?))
    }

    /// Full posing: returns the skinned mesh and world-space joints.
    pub fn pose(&self, params: &BodyParams) -> Result<PosedBody> {
        self.check_params(params)?;
        let shaped = self.shaped_vertices(&params.shape)?;
        let rest_joints = self.regress(&shaped);
        let rotations: Vec<Mat3> = params
            .pose
            .iter()
            .map(|&aa| axis_angle_to_matrix(Vec3::from(aa)))
            .collect();

        let posed_rest = match &self.pose_blendshapes {
            None => shaped,
            Some(blend) => self.apply_pose_blendshapes(shaped, &rotations, blend),
        };

        let mut world: Vec<Option<Rigid>> = vec![None; self.num_joints()];
        for &j in &self.topo_order {
            let local_translation = match self.parents[j] {
                Some(p) => rest_joints[j] - rest_joints[p],
                None => rest_joints[j],
            };
            let local = Rigid {
                rotation: rotations[j],
                translation: local_translation,
            };
            world[j] = Some(match self.parents[j] {
                Some(p) => world[p].expect("parents precede children").compose(&local),
                None => local,
            });
        }
        let world: Vec<Rigid> = world.into_iter().map(|g| g.expect("all joints visited")).collect();

        // Skinning transforms map rest-pose positions to posed positions.
        let skinning: Vec<Rigid> = world
            .iter()
            .zip(&rest_joints)
            .map(|(g, rest)| Rigid {
                rotation: g.rotation,
                translation: g.translation - g.rotation * rest,
            })
            .collect();

        let t = params.translation();
        let jn = self.num_joints();
        let vertices: Vec<Vec3> = posed_rest
            .iter()
            .enumerate()
            .map(|(vi, v)| {
                let weights = &self.skinning_weights[vi * jn..(vi + 1) * jn];
                let mut rot = Mat3::zeros();
                let mut trans = Vec3::zeros();
                for (w, a) in weights.iter().zip(&skinning) {
                    if *w != 0.0 {
                        rot += *w * a.rotation;
                        trans += *w * a.translation;
                    }
                }
                rot * v + trans + t
            })
            .collect();

        let joints = world.iter().map(|g| g.translation + t).collect();
        Ok(PosedBody {
            mesh: Mesh::new(vertices, self.faces.clone()),
            joints,
        })
    }

    fn apply_pose_blendshapes(&self, mut shaped: Vec<Vec3>, rotations: &[Mat3], blend: &[f64]) -> Vec<Vec3> {
        let mut features = Vec::with_capacity(9 * (self.num_joints() - 1));
        for (j, r) in rotations.iter().enumerate() {
            if j == self.root {
                continue;
            }
            let d = r - Mat3::identity();
            for row in 0..3 {
                for col in 0..3 {
                    features.push(d[(row, col)]);
                }
            }
        }
        let f = features.len();
        for (vi, v) in shaped.iter_mut().enumerate() {
            for axis in 0..3 {
                let base = (vi * 3 + axis) * f;
                v[axis] += blend[base..base + f]
                    .iter()
                    .zip(&features)
                    .map(|(b, x)| b * x)
                    .sum::<f64>();
            }
        }
        shaped
    }

    pub fn skin(&self, params: &BodyParams) -> Result<Mesh> {
        Ok(self.pose(params)?.mesh)
    }

    /// Image positions of every non-head joint in front of the camera.
    pub fn projected_keypoints(&self, params: &BodyParams, camera: &Camera) -> Result<Keypoints> {
        let posed = self.pose(params)?;
        let mut out = Keypoints::default();
        for (j, p) in posed.joints.iter().enumerate() {
            if self.head_joint_ids.contains(&j) {
                continue;
            }
            let pc = camera.to_camera(p);
            if pc.z <= 0.0 {
                out.behind_camera += 1;
                continue;
            }
            out.joint_ids.push(j);
            out.points.push(camera.project(&pc));
        }
        if out.behind_camera > 0 {
            log::warn!("{} joints behind the camera were dropped", out.behind_camera);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Keypoints {
    pub points: Vec<Vec2>,
    pub joint_ids: Vec<usize>,
    /// Joints skipped because they lie at or behind the camera plane.
    pub behind_camera: usize,
}

fn validate_tree(raw: &[i64]) -> Result<(Vec<Option<usize>>, usize, Vec<usize>)> {
    let j = raw.len();
    let mut parents = Vec::with_capacity(j);
    for (i, &p) in raw.iter().enumerate() {
        parents.push(match p {
            -1 => None,
            p if p >= 0 && (p as usize) < j && p as usize != i => Some(p as usize),
            p => {
                return Err(Error::BodyModel(format!(
                    "kinematic tree: joint {i} has invalid parent {p}"
                )))
            }
        });
    }
    let roots: Vec<usize> = (0..j).filter(|&i| parents[i].is_none()).collect();
    if roots.len() != 1 {
        return Err(Error::BodyModel(format!(
            "kinematic tree: expected exactly one root, found {}",
            roots.len()
        )));
    }
    // Every chain must reach the root within j steps.
    for start in 0..j {
        let mut cur = start;
        let mut steps = 0;
        while let Some(p) = parents[cur] {
            cur = p;
            steps += 1;
            if steps > j {
                return Err(Error::BodyModel(format!(
                    "kinematic tree: cycle through joint {start}"
                )));
            }
        }
    }
    let mut children = vec![Vec::new(); j];
    for (i, p) in parents.iter().enumerate() {
        if let Some(p) = p {
            children[*p].push(i);
        }
    }
    let mut order = Vec::with_capacity(j);
    let mut stack = vec![roots[0]];
    while let Some(n) = stack.pop() {
        order.push(n);
        stack.extend(children[n].iter().rev());
    }
    Ok((parents, roots[0], order))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::renderer::{Camera, Intrinsics};

    fn toy_file() -> BodyModelFile {
        serde_json::from_str(BodyModelData::toy_json()).unwrap()
    }

    #[test]
    fn toy_model_loads_with_normalized_rows() {
        let m = BodyModelData::toy();
        assert_eq!(m.num_joints(), 5);
        assert_eq!(m.num_vertices(), 32);
        for v in 0..32 {
            let s: f64 = (0..5).map(|j| m.skinning_weight(v, j)).sum();
            assert!((s - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn bad_weight_row_is_named() {
        let mut f = toy_file();
        for w in f.skinning_weights[7].iter_mut() {
            *w *= 0.9;
        }
        let err = BodyModelData::from_file(f).unwrap_err().to_string();
        assert!(err.contains("row 7"), "{err}");
    }

    #[test]
    fn parent_cycle_is_rejected() {
        let mut f = toy_file();
        f.kinematic_parents = vec![-1, 2, 1, 0, 0];
        let err = BodyModelData::from_file(f).unwrap_err().to_string();
        assert!(err.contains("kinematic tree"), "{err}");
    }

    #[test]
    fn two_roots_are_rejected() {
        let mut f = toy_file();
        f.kinematic_parents = vec![-1, -1, 1, 0, 0];
        assert!(BodyModelData::from_file(f).is_err());
    }

    #[test]
    fn regressor_dimension_mismatch() {
        let mut f = toy_file();
        f.joint_regressor[0].pop();
        assert!(matches!(BodyModelData::from_file(f), Err(Error::BodyModel(_))));
    }

    #[test]
    fn rest_pose_reproduces_template() {
        let m = BodyModelData::toy();
        let mesh = m.skin(&BodyParams::rest(&m)).unwrap();
        for (a, b) in mesh.vertices.iter().zip(m.template_vertices()) {
            assert!((a - b).norm() <= 1e-9);
        }
    }

    #[test]
    fn root_rotation_rotates_about_root_joint() {
        let m = BodyModelData::toy();
        let mut params = BodyParams::rest(&m);
        params.pose[m.root_joint()] = [0.0, 0.0, std::f64::consts::FRAC_PI_2];
        let mesh = m.skin(&params).unwrap();
        let root = m.regress_joints(&params.shape).unwrap()[m.root_joint()];
        // Oracle: rotate the template directly.
        let rz = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        for (got, tpl) in mesh.vertices.iter().zip(m.template_vertices()) {
            let want = rz * (tpl - root) + root;
            assert!((got - want).norm() <= 1e-6);
        }
        for i in 0..32 {
            for j in 0..32 {
                let a = (mesh.vertices[i] - mesh.vertices[j]).norm();
                let b = (m.template_vertices()[i] - m.template_vertices()[j]).norm();
                assert!((a - b).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn translation_shifts_every_vertex() {
        let m = BodyModelData::toy();
        let mut params = BodyParams::rest(&m);
        params.shape = vec![0.3, -0.2];
        params.pose[1] = [0.2, 0.1, -0.3];
        let base = m.skin(&params).unwrap();
        params.root_translation = [1.0, 2.0, 3.0];
        let moved = m.skin(&params).unwrap();
        for (a, b) in moved.vertices.iter().zip(&base.vertices) {
            assert!((a - b - Vec3::new(1.0, 2.0, 3.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn one_hot_and_uniform_regression() {
        let mut f = toy_file();
        let n = f.template_vertices.len();
        f.joint_regressor[0] = (0..n).map(|i| if i == 5 { 1.0 } else { 0.0 }).collect();
        f.joint_regressor[1] = vec![1.0 / n as f64; n];
        let m = BodyModelData::from_file(f).unwrap();
        let joints = m.regress_joints(&[0.0, 0.0]).unwrap();
        assert_eq!(joints[0], m.template_vertices()[5]);
        let centroid = m.template_vertices().iter().sum::<Vec3>() / n as f64;
        assert!((joints[1] - centroid).norm() < 1e-12);
    }

    #[test]
    fn unit_shape_coefficient_regression() {
        let m = BodyModelData::toy();
        let joints = m.regress_joints(&[1.0, 0.0]).unwrap();
        // Height blendshape displaces z by 0.1 * z; pelvis regresses from the
        // four torso-bottom corners at z = 0.9.
        assert!((joints[0] - Vec3::new(0.0, 0.0, 0.99)).norm() < 1e-12);
    }

    #[test]
    fn params_dimension_mismatch() {
        let m = BodyModelData::toy();
        let mut p = BodyParams::rest(&m);
        p.pose.pop();
        assert!(matches!(m.skin(&p), Err(Error::Dimension(_))));
        assert!(m.regress_joints(&[0.0]).is_err());
    }

    #[test]
    fn rodrigues_small_angle_branch_is_continuous() {
        let v = Vec3::new(3e-9, -2e-9, 1e-9);
        let small = axis_angle_to_matrix(v);
        let big = axis_angle_to_matrix(v * 1e3) ;
        assert!((small - Mat3::identity()).norm() < 1e-8);
        assert!((big.transpose() * big - Mat3::identity()).norm() < 1e-12);
    }

    #[test]
    fn normals_are_unit() {
        let m = BodyModelData::toy();
        let mesh = m.skin(&BodyParams::rest(&m)).unwrap();
        for n in &mesh.vertex_normals {
            assert!((n.norm() - 1.0).abs() < 1e-6);
        }
    }

    fn axis_camera() -> Camera {
        // Looks down +z from the origin.
        Camera::new(
            Intrinsics { fx: 100.0, fy: 100.0, cx: 32.0, cy: 24.0 },
            Mat3::identity(),
            Vec3::zeros(),
            64,
            48,
        )
        .unwrap()
    }

    #[test]
    fn keypoint_on_axis_projects_to_principal_point() {
        let cam = axis_camera();
        let p = cam.project(&Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(p, Vec2::new(32.0, 24.0));
        let q = cam.project(&Vec3::new(0.3, 0.0, 2.0));
        assert!((q.x - (100.0 * 0.3 / 2.0 + 32.0)).abs() < 1e-12);
    }

    #[test]
    fn keypoints_exclude_head_and_behind_camera() {
        let m = BodyModelData::toy();
        let cam = axis_camera();
        let mut params = BodyParams::rest(&m);
        params.root_translation = [0.0, 0.0, -10.0];
        let k = m.projected_keypoints(&params, &cam).unwrap();
        assert!(k.points.is_empty());
        assert_eq!(k.behind_camera, m.num_joints() - m.head_joint_ids().len());

        params.root_translation = [0.0, 0.0, 10.0];
        let k = m.projected_keypoints(&params, &cam).unwrap();
        assert_eq!(k.points.len(), 4);
        assert!(!k.joint_ids.contains(&2));
    }
}
