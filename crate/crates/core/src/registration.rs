//! Environment registration from digitized landmarks, and the pinhole
//! projection used to draw the twin as an overlay on the camera image.

use std::path::Path;

use nalgebra::{Matrix3, SVD};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraIntrinsics, Pose, RigidTransform, Rotation, Vec3};
use crate::scene::{PegState, SceneState};

pub const FRAME_BASE: &str = "base";
pub const FRAME_CAMERA: &str = "camera";
pub const FRAME_ENVIRONMENT: &str = "environment";

/// Rank threshold on the centered point cloud.
const DEGENERATE_SV: f64 = 1e-9;
/// Jaw direction segment length drawn in the overlay, meters.
const JAW_SEGMENT: f64 = 0.01;
/// Vertices per ring of the peg outline.
const PEG_RING_VERTICES: usize = 8;

#[derive(Debug, Error)]
pub enum RegistrationError {
    #[error("point sets differ in length ({model} model vs {robot} robot)")]
    LengthMismatch { model: usize, robot: usize },
    #[error("need at least 3 point pairs, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate geometry: points are collinear or duplicated")]
    Degenerate,
    #[error("point at depth {depth} is not in front of the camera")]
    BehindCamera { depth: f64 },
    #[error("extrinsic {from}->{to} does not connect base and camera frames")]
    ExtrinsicFrames { from: String, to: String },
    #[error("reading point pairs: {0}")]
    Csv(#[from] csv::Error),
}

/// Corresponding landmarks: CAD/environment frame and robot base frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPairSet {
    model_points: Vec<Vec3>,
    robot_points: Vec<Vec3>,
}

impl PointPairSet {
    pub fn new(model_points: Vec<Vec3>, robot_points: Vec<Vec3>) -> Result<Self, RegistrationError> {
        if model_points.len() != robot_points.len() {
            return Err(RegistrationError::LengthMismatch {
                model: model_points.len(),
                robot: robot_points.len(),
            });
        }
        if model_points.len() < 3 {
            return Err(RegistrationError::TooFewPoints(model_points.len()));
        }
        // Rank >= 2 is required for a unique rotation; coplanar sets (rank 2) are fine.
        if spread_singular_values(&model_points)[1] <= DEGENERATE_SV
            || spread_singular_values(&robot_points)[1] <= DEGENERATE_SV
        {
            return Err(RegistrationError::Degenerate);
        }
        Ok(Self { model_points, robot_points })
    }

    pub fn model_points(&self) -> &[Vec3] {
        &self.model_points
    }

    pub fn robot_points(&self) -> &[Vec3] {
        &self.robot_points
    }

    pub fn len(&self) -> usize {
        self.model_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.model_points.is_empty()
    }

    /// Reads `mx,my,mz,rx,ry,rz` rows (meters).
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self, RegistrationError> {
        Self::from_csv_reader(csv::Reader::from_path(path)?)
    }

    pub fn from_csv_reader<R: std::io::Read>(mut rdr: csv::Reader<R>) -> Result<Self, RegistrationError> {
        #[derive(Deserialize)]
        struct Row {
            mx: f64,
            my: f64,
            mz: f64,
            rx: f64,
            ry: f64,
            rz: f64,
        }
        let mut model = Vec::new();
        let mut robot = Vec::new();
        for row in rdr.deserialize() {
            let r: Row = row?;
            model.push(Vec3::new(r.mx, r.my, r.mz));
            robot.push(Vec3::new(r.rx, r.ry, r.rz));
        }
        Self::new(model, robot)
    }
}

fn centroid(points: &[Vec3]) -> Vec3 {
    let sum = points.iter().fold(Vec3::ZERO, |acc, p| acc + *p);
    sum * (1.0 / points.len() as f64)
}

/// Singular values of the centered point matrix, descending.
fn spread_singular_values(points: &[Vec3]) -> [f64; 3] {
    let c = centroid(points);
    let mut scatter = Matrix3::zeros();
    for p in points {
        let d = *p - c;
        let v = nalgebra::Vector3::new(d.x, d.y, d.z);
        scatter += v * v.transpose();
    }
    // Eigenvalues of the scatter matrix are squared singular values.
    let mut sv: Vec<f64> = scatter.symmetric_eigenvalues().iter().map(|e| e.max(0.0).sqrt()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    [sv[0], sv[1], sv[2]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    /// Environment -> robot base.
    pub transform: RigidTransform,
    /// Root-mean-square residual over the fitted pairs, meters.
    pub fre_rms: f64,
}

/// Closed-form least-squares rigid fit of model points onto robot points.
///
/// Centroids are aligned, the rotation comes from the SVD of the
/// cross-covariance, and a reflection is corrected by flipping the sign of
/// the weakest singular direction.
pub fn register_paired_points(pairs: &PointPairSet) -> Result<RegistrationResult, RegistrationError> {
    let cm = centroid(&pairs.model_points);
    let cr = centroid(&pairs.robot_points);
    let mut h = Matrix3::zeros();
    for (m, r) in pairs.model_points.iter().zip(&pairs.robot_points) {
        let a = *m - cm;
        let b = *r - cr;
        h += nalgebra::Vector3::new(a.x, a.y, a.z) * nalgebra::RowVector3::new(b.x, b.y, b.z);
    }
    let svd = SVD::new(h, true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(RegistrationError::Degenerate),
    };
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let correction = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 1.0, d));
    let r = v * correction * u.transpose();
    let rm = [
        [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
        [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
        [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
    ];
    let rotation = Rotation::from_matrix(rm);
    let translation = cr - rotation.rotate(cm);
    let transform = RigidTransform::new(FRAME_ENVIRONMENT, FRAME_BASE, rotation, translation);

    let sq: f64 = pairs
        .model_points
        .iter()
        .zip(&pairs.robot_points)
        .map(|(m, r)| {
            let e = transform.transform_point(*m) - *r;
            e.dot(e)
        })
        .sum();
    Ok(RegistrationResult { transform, fre_rms: (sq / pairs.len() as f64).sqrt() })
}

/// Returns the base->camera transform implied by `extrinsic`, which may be
/// given in either direction as long as its labels connect the two frames.
fn base_to_camera(extrinsic: &RigidTransform) -> Result<RigidTransform, RegistrationError> {
    match (extrinsic.from_frame.as_str(), extrinsic.to_frame.as_str()) {
        (FRAME_CAMERA, _) => Ok(extrinsic.inverse()),
        (_, FRAME_CAMERA) => Ok(extrinsic.clone()),
        _ => Err(RegistrationError::ExtrinsicFrames {
            from: extrinsic.from_frame.clone(),
            to: extrinsic.to_frame.clone(),
        }),
    }
}

fn project_camera_point(k: &CameraIntrinsics, pc: Vec3) -> Result<[f64; 2], RegistrationError> {
    if !(pc.z > 0.0) {
        return Err(RegistrationError::BehindCamera { depth: pc.z });
    }
    Ok([k.fx * pc.x / pc.z + k.cx, k.fy * pc.y / pc.z + k.cy])
}

/// Projects a base-frame point to pixel coordinates `(u, v)`.
///
/// `extrinsic` is the camera pose in the base frame (camera -> base), or its
/// inverse; frame labels decide which.
pub fn project_point(
    extrinsic: &RigidTransform,
    intrinsics: &CameraIntrinsics,
    p_base: Vec3,
) -> Result<[f64; 2], RegistrationError> {
    let to_cam = base_to_camera(extrinsic)?;
    project_camera_point(intrinsics, to_cam.transform_point(p_base))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum OverlayPrimitive {
    Point { label: String, at: [f64; 2] },
    Segment { label: String, from: [f64; 2], to: [f64; 2] },
    Polygon { label: String, points: Vec<[f64; 2]> },
}

impl OverlayPrimitive {
    pub fn label(&self) -> &str {
        match self {
            OverlayPrimitive::Point { label, .. }
            | OverlayPrimitive::Segment { label, .. }
            | OverlayPrimitive::Polygon { label, .. } => label,
        }
    }
}

/// Base-frame vertices of a held peg's outline: bottom ring then top ring.
pub fn peg_outline_vertices(scene: &SceneState, peg_pose: &Pose) -> [Vec<Vec3>; 2] {
    let r = scene.board.peg_radius;
    let h = scene.board.peg_height;
    let ring = |z: f64| {
        (0..PEG_RING_VERTICES)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / PEG_RING_VERTICES as f64;
                peg_pose.transform_point(Vec3::new(r * a.cos(), r * a.sin(), z))
            })
            .collect::<Vec<_>>()
    };
    [ring(0.0), ring(h)]
}

/// Reduces the tool (and a held peg) to labelled 2-D primitives.
/// Anything behind the camera is left out.
pub fn overlay_silhouette(
    scene: &SceneState,
    extrinsic: &RigidTransform,
    intrinsics: &CameraIntrinsics,
) -> Result<Vec<OverlayPrimitive>, RegistrationError> {
    let to_cam = base_to_camera(extrinsic)?;
    let project = |p: Vec3| project_camera_point(intrinsics, to_cam.transform_point(p)).ok();
    let mut out = Vec::new();

    let tip = scene.tool_tip();
    if let Some(at) = project(tip) {
        out.push(OverlayPrimitive::Point { label: "tool_tip".into(), at });
        let jaw_end = scene.tool.pose.transform_point(Vec3::new(JAW_SEGMENT, 0.0, 0.0));
        if let Some(to) = project(jaw_end) {
            out.push(OverlayPrimitive::Segment { label: "tool_jaw".into(), from: at, to });
        }
    }
    for peg in scene.pegs.iter().filter(|p| p.state == PegState::Held) {
        let pose = scene.peg_pose(peg);
        for (ring, name) in peg_outline_vertices(scene, &pose).iter().zip(["base", "top"]) {
            let pts: Option<Vec<_>> = ring.iter().map(|v| project(*v)).collect();
            if let Some(points) = pts {
                out.push(OverlayPrimitive::Polygon { label: format!("peg:{}:{name}", peg.id), points });
            }
        }
    }
    Ok(out)
}
