//! SE(3) math for demonstration trajectories: rotations, pinhole
//! projection/lifting, per-waypoint local frames, and orientation transfer
//! between a source demonstration and a target waypoint sequence.
//!
//! Conventions: world frame is right-handed with z up; rotations are 3x3
//! row-major matrices; camera extrinsics are 4x4 camera-from-world
//! transforms; pixel coordinates are (u, v) with u along image width.

use thiserror::Error;

/// World up direction used for local-frame construction.
pub const WORLD_UP: Vec3 = Vec3 {
    x: 0.0,
    y: 0.0,
    z: 1.0,
};

/// Reference direction substituted when the motion direction is parallel to up.
pub const FALLBACK_REF: Vec3 = Vec3 {
    x: 1.0,
    y: 0.0,
    z: 0.0,
};

/// Tolerance for orthogonality and determinant checks on rotations.
pub const ROTATION_TOL: f64 = 1e-9;

/// |up . x_hat| above this means the motion direction is degenerate with up.
const DEGENERATE_UP_DOT: f64 = 1.0 - 1e-6;

/// Consecutive waypoints closer than this cannot define a direction.
const MIN_SEGMENT_LEN: f64 = 1e-9;

/// Minimum camera-frame depth for a point to be considered in front.
const MIN_PROJECTION_DEPTH: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("zero-length segment between waypoints {0} and {1}")]
    ZeroLengthSegment(usize, usize),
    #[error("point is behind the camera (camera-frame depth {0:.3e})")]
    BehindCamera(f64),
    #[error("invalid depth {0}")]
    InvalidDepth(f64),
    #[error("not a rotation matrix: {0}")]
    NotARotation(String),
    #[error("cannot normalize a near-zero vector")]
    ZeroNorm,
    #[error("non-finite component in {0}")]
    NonFinite(&'static str),
    #[error("invalid camera model: {0}")]
    InvalidCamera(String),
    #[error("trajectory must contain at least one pose")]
    EmptyTrajectory,
    #[error("trajectory timestamps must be strictly increasing (index {0})")]
    NonIncreasingTimestamps(usize),
    #[error("trajectory has {poses} poses but {timestamps} timestamps")]
    TrajectoryLengthMismatch { poses: usize, timestamps: usize },
}

/// A 3D point or direction. Units are meters for points, unitless for
/// directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3 {
            x: self.y * other.z - self.z * other.y,
            y: self.z * other.x - self.x * other.z,
            z: self.x * other.y - self.y * other.x,
        }
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector in the same direction; errors on near-zero input.
    pub fn normalized(self) -> Result<Vec3, GeometryError> {
        let n = self.norm();
        if !n.is_finite() || n < MIN_SEGMENT_LEN {
            return Err(GeometryError::ZeroNorm);
        }
        Ok(self * (1.0 / n))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// A 3x3 rotation matrix, row-major.
///
/// Constructors that accept arbitrary data validate orthogonality
/// (`R^T R = I` within [`ROTATION_TOL`]) and `det = +1`; the arithmetic on
/// already-valid rotations preserves both properties to well below the
/// tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    m: [[f64; 3]; 3],
}

impl Rotation {
    pub fn identity() -> Self {
        Self {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Builds from row-major data after validating the rotation invariants.
    pub fn from_rows(m: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        let r = Self { m };
        r.validate()?;
        Ok(r)
    }

    /// Builds from three column vectors without validation. The caller must
    /// guarantee the columns form a right-handed orthonormal basis.
    pub(crate) fn from_cols_unchecked(x: Vec3, y: Vec3, z: Vec3) -> Self {
        Self {
            m: [[x.x, y.x, z.x], [x.y, y.y, z.y], [x.z, y.z, z.z]],
        }
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        self.m
    }

    pub fn col(&self, i: usize) -> Vec3 {
        Vec3::new(self.m[0][i], self.m[1][i], self.m[2][i])
    }

    pub fn transpose(&self) -> Rotation {
        let m = self.m;
        Rotation {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    /// Applies the rotation to a vector.
    pub fn apply(&self, v: Vec3) -> Vec3 {
        Vec3::new(
            self.m[0][0] * v.x + self.m[0][1] * v.y + self.m[0][2] * v.z,
            self.m[1][0] * v.x + self.m[1][1] * v.y + self.m[1][2] * v.z,
            self.m[2][0] * v.x + self.m[2][1] * v.y + self.m[2][2] * v.z,
        )
    }

    pub fn det(&self) -> f64 {
        let m = self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Max-abs entry of `R^T R - I`.
    pub fn orthogonality_error(&self) -> f64 {
        let rtr = self.transpose().mul(self);
        let mut err: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((rtr.m[i][j] - target).abs());
            }
        }
        err
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        for row in &self.m {
            for v in row {
                if !v.is_finite() {
                    return Err(GeometryError::NonFinite("rotation matrix"));
                }
            }
        }
        let ortho = self.orthogonality_error();
        if ortho > ROTATION_TOL {
            return Err(GeometryError::NotARotation(format!(
                "orthogonality error {ortho:.3e}"
            )));
        }
        let det = self.det();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(GeometryError::NotARotation(format!("det {det:.12}")));
        }
        Ok(())
    }

    pub fn mul(&self, rhs: &Rotation) -> Rotation {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.m[i][k] * rhs.m[k][j]).sum();
            }
        }
        Rotation { m }
    }

    /// Rotation of `angle` radians about the world z axis.
    pub fn about_z(angle: f64) -> Rotation {
        let (s, c) = angle.sin_cos();
        Rotation {
            m: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Rotation of `angle` radians about the world x axis.
    pub fn about_x(angle: f64) -> Rotation {
        let (s, c) = angle.sin_cos();
        Rotation {
            m: [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]],
        }
    }

    /// Rotation of `angle` radians about the world y axis.
    pub fn about_y(angle: f64) -> Rotation {
        let (s, c) = angle.sin_cos();
        Rotation {
            m: [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]],
        }
    }

    /// Builds from a (w, x, y, z) quaternion; the quaternion is normalized
    /// first so slightly denormalized serialized values stay valid.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n < MIN_SEGMENT_LEN {
            return Err(GeometryError::ZeroNorm);
        }
        let (w, x, y, z) = (w / n, x / n, y / n, z / n);
        Ok(Rotation {
            m: [
                [
                    1.0 - 2.0 * (y * y + z * z),
                    2.0 * (x * y - w * z),
                    2.0 * (x * z + w * y),
                ],
                [
                    2.0 * (x * y + w * z),
                    1.0 - 2.0 * (x * x + z * z),
                    2.0 * (y * z - w * x),
                ],
                [
                    2.0 * (x * z - w * y),
                    2.0 * (y * z + w * x),
                    1.0 - 2.0 * (x * x + y * y),
                ],
            ],
        })
    }

    /// Converts to a unit (w, x, y, z) quaternion via Shepperd's method.
    /// The sign is not canonicalized here.
    pub fn to_quaternion(&self) -> [f64; 4] {
        let m = self.m;
        let trace = m[0][0] + m[1][1] + m[2][2];
        let (w, x, y, z);
        if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            w = 0.25 * s;
            x = (m[2][1] - m[1][2]) / s;
            y = (m[0][2] - m[2][0]) / s;
            z = (m[1][0] - m[0][1]) / s;
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            w = (m[2][1] - m[1][2]) / s;
            x = 0.25 * s;
            y = (m[0][1] + m[1][0]) / s;
            z = (m[0][2] + m[2][0]) / s;
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            w = (m[0][2] - m[2][0]) / s;
            x = (m[0][1] + m[1][0]) / s;
            y = 0.25 * s;
            z = (m[1][2] + m[2][1]) / s;
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            w = (m[1][0] - m[0][1]) / s;
            x = (m[0][2] + m[2][0]) / s;
            y = (m[1][2] + m[2][1]) / s;
            z = 0.25 * s;
        }
        let n = (w * w + x * x + y * y + z * z).sqrt();
        [w / n, x / n, y / n, z / n]
    }
}

/// A 6-DoF pose: position plus orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose6D {
    pub position: Vec3,
    pub orientation: Rotation,
}

/// Pinhole camera with a camera-from-world extrinsic.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// 4x4 camera-from-world transform, row-major.
    pub extrinsic: [[f64; 4]; 4],
}

impl CameraModel {
    /// Validates intrinsics and the rotational part of the extrinsic.
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::InvalidCamera(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        for row in &self.extrinsic {
            for v in row {
                if !v.is_finite() {
                    return Err(GeometryError::NonFinite("camera extrinsic"));
                }
            }
        }
        self.rotation().validate().map_err(|e| {
            GeometryError::InvalidCamera(format!("extrinsic rotation invalid: {e}"))
        })?;
        let bottom = self.extrinsic[3];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(GeometryError::InvalidCamera(
                "extrinsic bottom row must be [0, 0, 0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Upper-left 3x3 of the extrinsic.
    pub fn rotation(&self) -> Rotation {
        let e = self.extrinsic;
        Rotation {
            m: [
                [e[0][0], e[0][1], e[0][2]],
                [e[1][0], e[1][1], e[1][2]],
                [e[2][0], e[2][1], e[2][2]],
            ],
        }
    }

    /// Translation column of the extrinsic.
    pub fn translation(&self) -> Vec3 {
        Vec3::new(
            self.extrinsic[0][3],
            self.extrinsic[1][3],
            self.extrinsic[2][3],
        )
    }

    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        self.rotation().apply(p) + self.translation()
    }

    pub fn camera_to_world(&self, p: Vec3) -> Vec3 {
        self.rotation().transpose().apply(p - self.translation())
    }

    /// Camera looking straight down the world z axis from the origin.
    pub fn with_identity_extrinsic(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Self {
        let mut extrinsic = [[0.0; 4]; 4];
        for (i, row) in extrinsic.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            extrinsic,
        }
    }
}

/// A timestamped SE(3) trajectory. Timestamps are seconds, strictly
/// increasing, one per pose.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySE3 {
    poses: Vec<Pose6D>,
    timestamps: Vec<f64>,
}

impl TrajectorySE3 {
    pub fn new(poses: Vec<Pose6D>, timestamps: Vec<f64>) -> Result<Self, GeometryError> {
        if poses.is_empty() {
            return Err(GeometryError::EmptyTrajectory);
        }
        if poses.len() != timestamps.len() {
            return Err(GeometryError::TrajectoryLengthMismatch {
                poses: poses.len(),
                timestamps: timestamps.len(),
            });
        }
        for (i, t) in timestamps.iter().enumerate() {
            if !t.is_finite() {
                return Err(GeometryError::NonIncreasingTimestamps(i));
            }
        }
        for (i, w) in timestamps.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(GeometryError::NonIncreasingTimestamps(i + 1));
            }
        }
        Ok(Self { poses, timestamps })
    }

    pub fn poses(&self) -> &[Pose6D] {
        &self.poses
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        false // at least one pose by construction
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.poses.iter().map(|p| p.position).collect()
    }

    pub fn start_time(&self) -> f64 {
        self.timestamps[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.timestamps.last().unwrap()
    }

    /// Contiguous sub-trajectory with timestamps in `[t0, t1]` inclusive,
    /// or `None` when no sample falls inside.
    pub fn window(&self, t0: f64, t1: f64) -> Option<TrajectorySE3> {
        let first = self.timestamps.iter().position(|&t| t >= t0)?;
        let last = self.timestamps.iter().rposition(|&t| t <= t1)?;
        if last < first {
            return None;
        }
        Some(TrajectorySE3 {
            poses: self.poses[first..=last].to_vec(),
            timestamps: self.timestamps[first..=last].to_vec(),
        })
    }
}

/// Builds the local frame at `waypoints[index]`.
///
/// Column x is the motion direction (next minus current waypoint; the last
/// waypoint reuses the preceding segment; a single waypoint uses (1, 0, 0)).
/// Column z is `up` Gram-Schmidt-orthogonalized against x, substituting
/// `fallback` when the motion direction is parallel to `up`. Column y closes
/// the right-handed basis as z cross x.
pub fn build_local_frame(
    waypoints: &[Vec3],
    index: usize,
    up: Vec3,
    fallback: Vec3,
) -> Result<Rotation, GeometryError> {
    assert!(
        index < waypoints.len(),
        "waypoint index {index} out of range for {} waypoints",
        waypoints.len()
    );
    let x_hat = if waypoints.len() == 1 {
        Vec3::new(1.0, 0.0, 0.0)
    } else {
        let (a, b) = if index + 1 < waypoints.len() {
            (index, index + 1)
        } else {
            (index - 1, index)
        };
        let seg = waypoints[b] - waypoints[a];
        if seg.norm() < MIN_SEGMENT_LEN {
            return Err(GeometryError::ZeroLengthSegment(a, b));
        }
        seg.normalized()?
    };
    let reference = if up.dot(x_hat).abs() > DEGENERATE_UP_DOT {
        fallback
    } else {
        up
    };
    let z_hat = (reference - x_hat * reference.dot(x_hat)).normalized()?;
    let y_hat = z_hat.cross(x_hat);
    Ok(Rotation::from_cols_unchecked(x_hat, y_hat, z_hat))
}

/// Re-expresses `r_src` through source and target local frames:
/// the skill pattern is `F_src^T R_src F_src`, which is conjugated back out
/// through the target frame as `F_tgt R_skill F_tgt^T`.
pub fn transfer_orientation(
    r_src: &Rotation,
    frame_src: &Rotation,
    frame_tgt: &Rotation,
) -> Rotation {
    let skill = frame_src.transpose().mul(r_src).mul(frame_src);
    frame_tgt.mul(&skill).mul(&frame_tgt.transpose())
}

/// Uniformly samples `n` indices over `[0, source_len - 1]`, endpoints
/// included for `n >= 2`; `n = 1` yields `[0]`.
pub fn sample_orientation_indices(source_len: usize, n: usize) -> Vec<usize> {
    assert!(source_len >= 1, "source_len must be at least 1");
    assert!(n >= 1, "sample count must be at least 1");
    if n == 1 {
        return vec![0];
    }
    (0..n)
        .map(|j| {
            let t = (j * (source_len - 1)) as f64 / (n - 1) as f64;
            t.round() as usize
        })
        .collect()
}

/// Projects a world point to pixel coordinates.
pub fn project_point(camera: &CameraModel, world_point: Vec3) -> Result<(f64, f64), GeometryError> {
    let pc = camera.world_to_camera(world_point);
    if pc.z <= MIN_PROJECTION_DEPTH {
        return Err(GeometryError::BehindCamera(pc.z));
    }
    Ok((
        camera.fx * pc.x / pc.z + camera.cx,
        camera.fy * pc.y / pc.z + camera.cy,
    ))
}

/// Lifts a pixel at a known depth (camera-frame z, meters) to a world point.
pub fn lift_pixel(
    camera: &CameraModel,
    pixel: (f64, f64),
    depth: f64,
) -> Result<Vec3, GeometryError> {
    if !depth.is_finite() || depth <= 0.0 {
        return Err(GeometryError::InvalidDepth(depth));
    }
    let (u, v) = pixel;
    let pc = Vec3::new(
        (u - camera.cx) * depth / camera.fx,
        (v - camera.cy) * depth / camera.fy,
        depth,
    );
    Ok(camera.camera_to_world(pc))
}

/// Pairs each 3D waypoint with an orientation transferred from the source
/// trajectory: source poses are uniformly sampled to match the waypoint
/// count, and each sampled rotation is moved through the local frames at the
/// sampled source waypoint and the target waypoint.
pub fn attach_orientations(
    waypoints3d: &[Vec3],
    source: &TrajectorySE3,
    up: Vec3,
    fallback: Vec3,
) -> Result<Vec<Pose6D>, GeometryError> {
    assert!(!waypoints3d.is_empty(), "waypoint list must be non-empty");
    let src_positions = source.positions();
    let indices = sample_orientation_indices(source.len(), waypoints3d.len());
    waypoints3d
        .iter()
        .enumerate()
        .map(|(j, &w)| {
            let si = indices[j];
            let frame_src = build_local_frame(&src_positions, si, up, fallback)?;
            let frame_tgt = build_local_frame(waypoints3d, j, up, fallback)?;
            let orientation =
                transfer_orientation(&source.poses()[si].orientation, &frame_src, &frame_tgt);
            Ok(Pose6D {
                position: w,
                orientation,
            })
        })
        .collect()
}
