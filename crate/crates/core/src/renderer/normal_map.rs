use super::Camera;
use crate::body_model::Mesh;
use crate::image::{ImageBuffer, ImageRole};
use crate::Vec3;

const NEAR: f64 = 1e-6;

/// Maps a camera-space unit normal to `[0, 1]` in the view frame
/// `(x, -y, -z)`, so a surface facing the camera encodes as `(0.5, 0.5, 1)`.
pub fn encode_normal(n_cam: &Vec3) -> [f64; 3] {
    [(n_cam.x + 1.0) * 0.5, (1.0 - n_cam.y) * 0.5, (1.0 - n_cam.z) * 0.5]
}

/// Z-buffered rasterization of interpolated vertex normals. Uncovered pixels
/// are 0.5 gray; triangles crossing the camera plane or with zero screen area
/// are skipped.
pub fn render_normal_map(mesh: &Mesh, camera: &Camera) -> ImageBuffer {
    let (w, h) = (camera.width, camera.height);
    let mut img = ImageBuffer::filled(w, h, 3, ImageRole::Normal, 0.5);
    let mut depth = vec![f64::INFINITY; w * h];

    let cam_pts: Vec<Vec3> = mesh.vertices.iter().map(|v| camera.to_camera(v)).collect();
    let cam_normals: Vec<Vec3> = mesh.vertex_normals.iter().map(|n| camera.rotation * n).collect();

    for face in &mesh.faces {
        let p = [cam_pts[face[0]], cam_pts[face[1]], cam_pts[face[2]]];
        if p.iter().any(|q| q.z <= NEAR) {
            continue;
        }
        let s = p.map(|q| camera.project(&q));
        let area = (s[1].x - s[0].x) * (s[2].y - s[0].y) - (s[1].y - s[0].y) * (s[2].x - s[0].x);
        if area.abs() < 1e-12 {
            continue;
        }
        let xmin = s.iter().map(|v| v.x).fold(f64::INFINITY, f64::min).ceil().max(0.0);
        let xmax = s.iter().map(|v| v.x).fold(f64::NEG_INFINITY, f64::max).floor().min(w as f64 - 1.0);
        let ymin = s.iter().map(|v| v.y).fold(f64::INFINITY, f64::min).ceil().max(0.0);
        let ymax = s.iter().map(|v| v.y).fold(f64::NEG_INFINITY, f64::max).floor().min(h as f64 - 1.0);
        if xmin > xmax || ymin > ymax {
            continue;
        }
        for y in ymin as usize..=ymax as usize {
            for x in xmin as usize..=xmax as usize {
                let (px, py) = (x as f64, y as f64);
                let edge = |a: usize, b: usize| (s[b].x - s[a].x) * (py - s[a].y) - (s[b].y - s[a].y) * (px - s[a].x);
                let b0 = edge(1, 2) / area;
                let b1 = edge(2, 0) / area;
                let b2 = edge(0, 1) / area;
                if b0 < 0.0 || b1 < 0.0 || b2 < 0.0 {
                    continue;
                }
                // Perspective-correct weights.
                let q = [b0 / p[0].z, b1 / p[1].z, b2 / p[2].z];
                let inv_z = q[0] + q[1] + q[2];
                let z = 1.0 / inv_z;
                let idx = y * w + x;
                if z >= depth[idx] {
                    continue;
                }
                let n = (cam_normals[face[0]] * q[0] + cam_normals[face[1]] * q[1] + cam_normals[face[2]] * q[2]) * z;
                let len = n.norm();
                if !(len > 0.0) {
                    continue;
                }
                depth[idx] = z;
                let enc = encode_normal(&(n / len));
                for (c, v) in enc.iter().enumerate() {
                    img.set(x, y, c, *v);
                }
            }
        }
    }
    img
}
