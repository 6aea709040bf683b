//! Closed triangulated surfaces.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::geometry::{point_triangle_distance, solid_angle, Vec3};

/// Closed, consistently oriented triangle mesh with outward normals.
#[derive(Clone, Debug)]
pub struct SurfaceMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    centroids: Vec<Vec3>,
    areas: Vec<f64>,
    normals: Vec<Vec3>,
}

impl SurfaceMesh {
    /// Validates topology and geometry; flips the orientation if it is inward.
    pub fn new(vertices: Vec<Vec3>, mut triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.len() < 4 {
            return Err(Error::Mesh(format!("a closed surface needs at least 4 triangles, got {}", triangles.len())));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::Mesh(format!("triangle {t} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Mesh(format!("triangle {t} repeats a vertex")));
            }
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::Mesh("non-finite vertex coordinate".into()));
        }

        // Each undirected edge must be shared by exactly two triangles that
        // traverse it in opposite directions.
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &triangles {
            for k in 0..3 {
                *directed.entry((tri[k], tri[(k + 1) % 3])).or_default() += 1;
            }
        }
        for (&(a, b), &count) in &directed {
            if count != 1 {
                return Err(Error::Mesh(format!("edge ({a}, {b}) is traversed {count} times in the same direction")));
            }
            if !directed.contains_key(&(b, a)) {
                return Err(Error::Mesh(format!("edge ({a}, {b}) is on an open boundary")));
            }
        }

        let signed_volume: f64 = triangles
            .iter()
            .map(|t| vertices[t[0]].dot(&vertices[t[1]].cross(&vertices[t[2]])) / 6.0)
            .sum();
        if signed_volume < 0.0 {
            for t in &mut triangles {
                t.swap(1, 2);
            }
        }

        let (lo, hi) = vertices.iter().fold(
            (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
            |(lo, hi), v| (lo.inf(v), hi.sup(v)),
        );
        let extent = (hi - lo).norm();
        let mut centroids = Vec::with_capacity(triangles.len());
        let mut areas = Vec::with_capacity(triangles.len());
        let mut normals = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let [a, b, c] = tri.map(|i| vertices[i]);
            let n = (b - a).cross(&(c - a));
            let area = 0.5 * n.norm();
            if !(area > 1e-14 * extent * extent) {
                return Err(Error::Mesh(format!("triangle {t} is degenerate (area {area:e})")));
            }
            centroids.push((a + b + c) / 3.0);
            areas.push(area);
            normals.push(n / (2.0 * area));
        }
        Ok(Self {
            vertices,
            triangles,
            centroids,
            areas,
            normals,
        })
    }

    /// Geodesic sphere: each icosahedron face split into `frequency^2`
    /// triangles, vertices projected onto the sphere. `20 frequency^2` panels.
    pub fn icosphere(radius: f64, frequency: usize) -> Result<Self> {
        if !(radius > 0.0) || frequency == 0 {
            return Err(Error::Mesh("icosphere needs radius > 0 and frequency >= 1".into()));
        }
        let g = (1.0 + 5f64.sqrt()) / 2.0;
        let base = [
            [-1.0, g, 0.0], [1.0, g, 0.0], [-1.0, -g, 0.0], [1.0, -g, 0.0],
            [0.0, -1.0, g], [0.0, 1.0, g], [0.0, -1.0, -g], [0.0, 1.0, -g],
            [g, 0.0, -1.0], [g, 0.0, 1.0], [-g, 0.0, -1.0], [-g, 0.0, 1.0],
        ]
        .map(|p| Vec3::new(p[0], p[1], p[2]));
        let faces = [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ];
        let n = frequency;
        let mut index: HashMap<[i64; 3], usize> = HashMap::new();
        let mut vertices = Vec::new();
        let mut triangles = Vec::with_capacity(20 * n * n);
        let mut vid = |p: Vec3| -> usize {
            let p = p.normalize();
            let key = [p.x, p.y, p.z].map(|c| (c * 1e9).round() as i64);
            *index.entry(key).or_insert_with(|| {
                vertices.push(p * radius);
                vertices.len() - 1
            })
        };
        for f in faces {
            let [a, b, c] = f.map(|i| base[i]);
            let at = |i: usize, j: usize| a + (b - a) * (i as f64 / n as f64) + (c - a) * (j as f64 / n as f64);
            for i in 0..n {
                for j in 0..n - i {
                    triangles.push([vid(at(i, j)), vid(at(i + 1, j)), vid(at(i, j + 1))]);
                    if i + j + 1 < n {
                        triangles.push([vid(at(i + 1, j)), vid(at(i + 1, j + 1)), vid(at(i, j + 1))]);
                    }
                }
            }
        }
        Self::new(vertices, triangles)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn centroids(&self) -> &[Vec3] {
        &self.centroids
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn panel_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Largest vertex-to-vertex distance.
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d = d.max((a - b).norm());
            }
        }
        d
    }

    /// Image under `x -> scale * x + shift`.
    pub fn transformed(&self, scale: f64, shift: Vec3) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::Mesh(format!("scale must be positive, got {scale}")));
        }
        Self::new(
            self.vertices.iter().map(|v| v * scale + shift).collect(),
            self.triangles.clone(),
        )
    }

    /// Distance from `p` to the surface.
    pub fn distance_to(&self, p: &Vec3) -> f64 {
        self.triangles
            .iter()
            .map(|t| point_triangle_distance(p, &self.vertices[t[0]], &self.vertices[t[1]], &self.vertices[t[2]]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Winding-number containment test.
    pub fn contains(&self, p: &Vec3) -> bool {
        let omega: f64 = self
            .triangles
            .iter()
            .map(|t| solid_angle(p, &self.vertices[t[0]], &self.vertices[t[1]], &self.vertices[t[2]]))
            .sum();
        omega > 2.0 * std::f64::consts::PI
    }

    /// Reads `v x y z` and `f i j k` lines (1-based indices, OBJ style).
    /// Other lines and `#` comments are ignored; `f` entries may carry
    /// `/`-separated attributes.
    pub fn read_obj<R: BufRead>(r: R) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let mut it = line.split_whitespace();
            let bad = |what: &str| Error::Parse(format!("line {}: {what}", lineno + 1));
            match it.next() {
                Some("v") => {
                    let c: Vec<f64> = it
                        .take(3)
                        .map(|s| s.parse::<f64>().map_err(|_| bad("bad vertex coordinate")))
                        .collect::<Result<_>>()?;
                    if c.len() != 3 {
                        return Err(bad("vertex needs three coordinates"));
                    }
                    vertices.push(Vec3::new(c[0], c[1], c[2]));
                }
                Some("f") => {
                    let idx: Vec<usize> = it
                        .map(|s| {
                            s.split('/')
                                .next()
                                .and_then(|i| i.parse::<usize>().ok())
                                .filter(|&i| i >= 1)
                                .map(|i| i - 1)
                                .ok_or_else(|| bad("bad face index"))
                        })
                        .collect::<Result<_>>()?;
                    if idx.len() != 3 {
                        return Err(bad("only triangular faces are supported"));
                    }
                    triangles.push([idx[0], idx[1], idx[2]]);
                }
                _ => {}
            }
        }
        Self::new(vertices, triangles)
    }

    pub fn write_obj<W: Write>(&self, mut w: W) -> Result<()> {
        for v in &self.vertices {
            writeln!(w, "v {:e} {:e} {:e}", v.x, v.y, v.z)?;
        }
        for t in &self.triangles {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetrahedron() -> (Vec<Vec3>, Vec<[usize; 3]>) {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        // inward orientation on purpose
        let t = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
        (v, t)
    }

    #[test]
    fn orientation_is_made_outward() {
        let (v, t) = tetrahedron();
        let m = SurfaceMesh::new(v, t).unwrap();
        let c = Vec3::new(0.25, 0.25, 0.25);
        for (n, x) in m.normals().iter().zip(m.centroids()) {
            assert!(n.dot(&(x - c)) > 0.0);
        }
        assert!(m.contains(&c));
        assert!(!m.contains(&Vec3::new(1.0, 1.0, 1.0)));
    }

    #[test]
    fn open_or_degenerate_meshes_are_rejected() {
        let (v, mut t) = tetrahedron();
        t.pop();
        assert!(matches!(SurfaceMesh::new(v.clone(), t), Err(Error::Mesh(_))));
        let (mut v2, t2) = tetrahedron();
        v2[3] = Vec3::new(0.5, 0.5, 0.0);
        assert!(SurfaceMesh::new(v2, t2).is_err());
        let (v3, mut t3) = tetrahedron();
        t3[0] = [0, 2, 1];
        assert!(SurfaceMesh::new(v3, t3).is_err());
    }

    #[test]
    fn icosphere_counts_and_area() {
        let m = SurfaceMesh::icosphere(2.0, 6).unwrap();
        assert_eq!(m.panel_count(), 720);
        assert_eq!(m.vertices().len(), 10 * 36 + 2);
        let exact = 4.0 * std::f64::consts::PI * 4.0;
        assert!((m.total_area() - exact).abs() / exact < 0.01);
        assert!((m.diameter() - 4.0).abs() < 1e-9);
        assert!(m.contains(&Vec3::zeros()));
        assert!((m.distance_to(&Vec3::new(5.0, 0.0, 0.0)) - 3.0).abs() < 0.01);
    }

    #[test]
    fn obj_roundtrip() {
        let m = SurfaceMesh::icosphere(1.0, 2).unwrap();
        let mut buf = Vec::new();
        m.write_obj(&mut buf).unwrap();
        let back = SurfaceMesh::read_obj(&buf[..]).unwrap();
        assert_eq!(back.triangles(), m.triangles());
        assert!((back.total_area() - m.total_area()).abs() < 1e-12);
    }
}
