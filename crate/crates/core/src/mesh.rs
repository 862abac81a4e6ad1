//! 2D conforming triangular meshes with face connectivity and boundary tags.
//!
//! Coordinates are in metres. Every element is stored with positive
//! orientation (counter-clockwise vertex order); local edge `k` of an element
//! connects its local vertices `k` and `(k + 1) % 3`. Interior faces carry the
//! unit normal of their first ("plus") element, which points into the second
//! ("minus") element.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::Point2;

/// Boundary condition tag. `Pial` faces carry Dirichlet pressure data,
/// `Vent` faces are zero-flux.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Pial,
    Vent,
}

impl BoundaryTag {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryTag::Pial => "pial",
            BoundaryTag::Vent => "vent",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pial" => Some(BoundaryTag::Pial),
            "vent" => Some(BoundaryTag::Vent),
            _ => None,
        }
    }
}

/// A face shared by exactly two elements.
#[derive(Debug, Clone)]
pub struct InteriorFace {
    /// [plus, minus] element indices.
    pub elems: [usize; 2],
    /// Local edge ids in the plus and minus element.
    pub local: [usize; 2],
    /// Global vertex indices, in the traversal order of the plus element.
    pub verts: [usize; 2],
    /// Unit normal pointing from the plus element into the minus element.
    pub normal: Point2,
    pub length: f64,
}

/// A face on the domain boundary.
#[derive(Debug, Clone)]
pub struct BoundaryFace {
    pub elem: usize,
    pub local: usize,
    /// Global vertex indices, in the traversal order of the element.
    pub verts: [usize; 2],
    /// Outward unit normal.
    pub normal: Point2,
    pub length: f64,
    pub tag: BoundaryTag,
}

/// Conforming triangular mesh.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Point2>,
    pub elements: Vec<[usize; 3]>,
    pub interior_faces: Vec<InteriorFace>,
    pub boundary_faces: Vec<BoundaryFace>,
    /// Element diameters h_K (longest edge).
    pub diameters: Vec<f64>,
    areas: Vec<f64>,
}

impl Mesh {
    /// Builds a mesh from raw vertices, elements and explicit boundary tags.
    ///
    /// Every boundary face discovered from the connectivity must be tagged
    /// exactly once; any mismatch is a validation error.
    pub fn from_parts(
        vertices: Vec<Point2>,
        elements: Vec<[usize; 3]>,
        boundary_tags: &[(usize, usize, BoundaryTag)],
    ) -> Result<Mesh> {
        let topo = Topology::build(&vertices, &elements)?;
        let mut tag_map: HashMap<(usize, usize), BoundaryTag> = HashMap::new();
        for &(elem, local, tag) in boundary_tags {
            if tag_map.insert((elem, local), tag).is_some() {
                return Err(Error::validation(format!(
                    "duplicate boundary tag for element {elem}, local face {local}"
                )));
            }
        }
        let mut boundary_faces = Vec::with_capacity(topo.boundary.len());
        for (elem, local) in topo.boundary {
            let tag = tag_map.remove(&(elem, local)).ok_or_else(|| {
                Error::validation(format!(
                    "boundary face (element {elem}, local face {local}) has no tag"
                ))
            })?;
            let (verts, normal, length) = edge_geometry(&vertices, &elements, elem, local);
            boundary_faces.push(BoundaryFace {
                elem,
                local,
                verts,
                normal,
                length,
                tag,
            });
        }
        if let Some(((elem, local), _)) = tag_map.into_iter().next() {
            return Err(Error::validation(format!(
                "tag refers to (element {elem}, local face {local}), which is not a boundary face"
            )));
        }
        Ok(Mesh {
            interior_faces: topo.interior,
            boundary_faces,
            diameters: topo.diameters,
            areas: topo.areas,
            vertices,
            elements,
        })
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn element_vertices(&self, k: usize) -> [Point2; 3] {
        let [a, b, c] = self.elements[k];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, k: usize) -> f64 {
        self.areas[k]
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn h_max(&self) -> f64 {
        self.diameters.iter().cloned().fold(0.0, f64::max)
    }

    pub fn element_centroid(&self, k: usize) -> Point2 {
        let [a, b, c] = self.element_vertices(k);
        [
            (a[0] + b[0] + c[0]) / 3.0,
            (a[1] + b[1] + c[1]) / 3.0,
        ]
    }

    /// Outward unit normal and length of a local edge, recomputed from the
    /// element geometry.
    pub fn outward_normal(&self, elem: usize, local: usize) -> (Point2, f64) {
        let (_, n, len) = edge_geometry(&self.vertices, &self.elements, elem, local);
        (n, len)
    }

    /// Serializes to the plain-text `dgmesh 1` format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("dgmesh 1\n");
        let _ = writeln!(s, "vertices {}", self.vertices.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{} {}", v[0], v[1]);
        }
        let _ = writeln!(s, "elements {}", self.elements.len());
        for e in &self.elements {
            let _ = writeln!(s, "{} {} {}", e[0], e[1], e[2]);
        }
        let _ = writeln!(s, "boundary {}", self.boundary_faces.len());
        for f in &self.boundary_faces {
            let _ = writeln!(s, "{} {} {}", f.elem, f.local, f.tag.as_str());
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

struct Topology {
    interior: Vec<InteriorFace>,
    boundary: Vec<(usize, usize)>,
    diameters: Vec<f64>,
    areas: Vec<f64>,
}

impl Topology {
    fn build(vertices: &[Point2], elements: &[[usize; 3]]) -> Result<Topology> {
        let nv = vertices.len();
        let mut diameters = Vec::with_capacity(elements.len());
        let mut areas = Vec::with_capacity(elements.len());
        for (k, e) in elements.iter().enumerate() {
            for &v in e {
                if v >= nv {
                    return Err(Error::validation(format!(
                        "element {k} references vertex {v}, but only {nv} vertices exist"
                    )));
                }
            }
            if e[0] == e[1] || e[1] == e[2] || e[0] == e[2] {
                return Err(Error::validation(format!("element {k} has repeated vertices")));
            }
            let [a, b, c] = [vertices[e[0]], vertices[e[1]], vertices[e[2]]];
            let double_area =
                (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
            if double_area <= 0.0 {
                return Err(Error::validation(format!(
                    "element {k} is degenerate or negatively oriented (signed area {})",
                    0.5 * double_area
                )));
            }
            areas.push(0.5 * double_area);
            let h = dist(a, b).max(dist(b, c)).max(dist(c, a));
            diameters.push(h);
        }

        // Edge key (min vertex, max vertex) -> sharing (element, local edge) pairs.
        let mut edges: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
        for (k, e) in elements.iter().enumerate() {
            for local in 0..3 {
                let a = e[local];
                let b = e[(local + 1) % 3];
                let key = (a.min(b), a.max(b));
                edges.entry(key).or_default().push((k, local));
            }
        }

        let mut interior = Vec::new();
        let mut boundary = Vec::new();
        // Deterministic face ordering regardless of hash-map iteration.
        let mut keys: Vec<_> = edges.keys().cloned().collect();
        keys.sort_unstable();
        for key in keys {
            let sharers = &edges[&key];
            match sharers.len() {
                1 => boundary.push(sharers[0]),
                2 => {
                    let (mut plus, mut minus) = (sharers[0], sharers[1]);
                    if plus.0 > minus.0 {
                        std::mem::swap(&mut plus, &mut minus);
                    }
                    let (verts, normal, length) =
                        edge_geometry(vertices, elements, plus.0, plus.1);
                    // In a conforming mesh of positively oriented triangles the
                    // minus element traverses the shared edge in reverse.
                    let e_minus = elements[minus.0];
                    let (ma, mb) = (e_minus[minus.1], e_minus[(minus.1 + 1) % 3]);
                    if (ma, mb) != (verts[1], verts[0]) {
                        return Err(Error::validation(format!(
                            "elements {} and {} share edge ({}, {}) with inconsistent orientation",
                            plus.0, minus.0, key.0, key.1
                        )));
                    }
                    interior.push(InteriorFace {
                        elems: [plus.0, minus.0],
                        local: [plus.1, minus.1],
                        verts,
                        normal,
                        length,
                    });
                }
                n => {
                    return Err(Error::validation(format!(
                        "edge ({}, {}) is shared by {n} elements",
                        key.0, key.1
                    )));
                }
            }
        }
        boundary.sort_unstable();

        Ok(Topology {
            interior,
            boundary,
            diameters,
            areas,
        })
    }
}

fn edge_geometry(
    vertices: &[Point2],
    elements: &[[usize; 3]],
    elem: usize,
    local: usize,
) -> ([usize; 2], Point2, f64) {
    let e = elements[elem];
    let a = e[local];
    let b = e[(local + 1) % 3];
    let (pa, pb) = (vertices[a], vertices[b]);
    let d = [pb[0] - pa[0], pb[1] - pa[1]];
    let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
    // Edges of a CCW triangle see the outward normal on their right side.
    let normal = [d[1] / len, -d[0] / len];
    ([a, b], normal, len)
}

fn dist(a: Point2, b: Point2) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Structured criss-cross triangulation of the rectangle (0, lx) × (0, ly)
/// with 2·nx·ny positively oriented triangles. All boundary faces are tagged
/// `Pial`.
pub fn generate_rect_mesh(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::invalid_argument(format!(
            "mesh subdivisions must be at least 1 (got {nx} x {ny})"
        )));
    }
    if !(lx > 0.0) || !(ly > 0.0) {
        return Err(Error::invalid_argument(format!(
            "domain side lengths must be positive (got {lx} x {ly})"
        )));
    }
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([lx * i as f64 / nx as f64, ly * j as f64 / ny as f64]);
        }
    }
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut elements = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10) = (vid(i, j), vid(i + 1, j));
            let (v01, v11) = (vid(i, j + 1), vid(i + 1, j + 1));
            elements.push([v00, v10, v11]);
            elements.push([v00, v11, v01]);
        }
    }
    // Tag every boundary edge; discover them from the grid structure.
    let mut tags = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let lower = 2 * (j * nx + i);
            let upper = lower + 1;
            if j == 0 {
                tags.push((lower, 0, BoundaryTag::Pial)); // bottom edge v00-v10
            }
            if i + 1 == nx {
                tags.push((lower, 1, BoundaryTag::Pial)); // right edge v10-v11
            }
            if j + 1 == ny {
                tags.push((upper, 1, BoundaryTag::Pial)); // top edge v11-v01
            }
            if i == 0 {
                tags.push((upper, 2, BoundaryTag::Pial)); // left edge v01-v00
            }
        }
    }
    Mesh::from_parts(vertices, elements, &tags)
}

/// Loads a mesh from the plain-text format written by [`Mesh::save`]:
/// header `dgmesh 1`, then `vertices N`, `elements M`, `boundary K` sections.
/// `#` starts a comment.
pub fn load_mesh(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path)?;
    parse_mesh(&text, &path.display().to_string())
}

pub fn parse_mesh(text: &str, path: &str) -> Result<Mesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let perr = |line: usize, msg: String| Error::Parse {
        path: path.to_string(),
        line,
        msg,
    };

    let (hline, header) = lines
        .next()
        .ok_or_else(|| perr(0, "empty mesh file".into()))?;
    if header != "dgmesh 1" {
        return Err(perr(hline, format!("expected header `dgmesh 1`, got `{header}`")));
    }

    let expect_section = |name: &str,
                              lines: &mut dyn Iterator<Item = (usize, &str)>|
     -> Result<(usize, usize)> {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| perr(0, format!("missing `{name}` section")))?;
        let mut it = l.split_whitespace();
        match (it.next(), it.next(), it.next()) {
            (Some(word), Some(count), None) if word == name => count
                .parse::<usize>()
                .map(|c| (ln, c))
                .map_err(|_| perr(ln, format!("bad count `{count}` in `{name}` section"))),
            _ => Err(perr(ln, format!("expected `{name} <count>`, got `{l}`"))),
        }
    };

    let (_, nv) = expect_section("vertices", &mut lines)?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| perr(0, "unexpected end of file in vertex list".into()))?;
        let nums: Vec<&str> = l.split_whitespace().collect();
        if nums.len() != 2 {
            return Err(perr(ln, format!("expected `x y`, got `{l}`")));
        }
        let x: f64 = nums[0]
            .parse()
            .map_err(|_| perr(ln, format!("bad coordinate `{}`", nums[0])))?;
        let y: f64 = nums[1]
            .parse()
            .map_err(|_| perr(ln, format!("bad coordinate `{}`", nums[1])))?;
        if !x.is_finite() || !y.is_finite() {
            return Err(perr(ln, "non-finite vertex coordinate".into()));
        }
        vertices.push([x, y]);
    }

    let (_, ne) = expect_section("elements", &mut lines)?;
    let mut elements = Vec::with_capacity(ne);
    for _ in 0..ne {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| perr(0, "unexpected end of file in element list".into()))?;
        let ids: Vec<&str> = l.split_whitespace().collect();
        if ids.len() != 3 {
            return Err(perr(ln, format!("expected `v0 v1 v2`, got `{l}`")));
        }
        let mut e = [0usize; 3];
        for (slot, tok) in e.iter_mut().zip(&ids) {
            *slot = tok
                .parse()
                .map_err(|_| perr(ln, format!("bad vertex index `{tok}`")))?;
            if *slot >= vertices.len() {
                return Err(perr(
                    ln,
                    format!("vertex index {slot} out of range (have {} vertices)", vertices.len()),
                ));
            }
        }
        elements.push(e);
    }

    let (_, nb) = expect_section("boundary", &mut lines)?;
    let mut tags = Vec::with_capacity(nb);
    for _ in 0..nb {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| perr(0, "unexpected end of file in boundary list".into()))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(perr(ln, format!("expected `elem localface tag`, got `{l}`")));
        }
        let elem: usize = toks[0]
            .parse()
            .map_err(|_| perr(ln, format!("bad element index `{}`", toks[0])))?;
        let local: usize = toks[1]
            .parse()
            .map_err(|_| perr(ln, format!("bad local face id `{}`", toks[1])))?;
        if local > 2 {
            return Err(perr(ln, format!("local face id {local} out of range 0..=2")));
        }
        let tag = BoundaryTag::parse(toks[2])
            .ok_or_else(|| perr(ln, format!("unknown boundary tag `{}`", toks[2])))?;
        tags.push((elem, local, tag));
    }

    if let Some((ln, l)) = lines.next() {
        return Err(perr(ln, format!("unexpected trailing content `{l}`")));
    }

    Mesh::from_parts(vertices, elements, &tags)
}

/// Geometric subdomain used for seeding regions and injury sites. Disk
/// membership uses a strict inequality on the squared distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SubdomainSpec {
    Disk { center: Point2, radius_sq: f64 },
    Whole,
}

impl SubdomainSpec {
    pub fn disk(center: Point2, radius_sq: f64) -> Result<Self> {
        if !(radius_sq > 0.0) {
            return Err(Error::invalid_argument(format!(
                "disk subdomain needs a positive squared radius (got {radius_sq})"
            )));
        }
        Ok(SubdomainSpec::Disk { center, radius_sq })
    }

    /// True iff `point` lies inside the subdomain.
    pub fn contains(&self, point: Point2) -> bool {
        match *self {
            SubdomainSpec::Whole => true,
            SubdomainSpec::Disk { center, radius_sq } => {
                let dx = point[0] - center[0];
                let dy = point[1] - center[1];
                dx * dx + dy * dy < radius_sq
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn smallest_criss_cross() {
        let m = generate_rect_mesh(1, 1, 1.0, 1.0).unwrap();
        assert_eq!(m.num_elements(), 2);
        assert_eq!(m.interior_faces.len(), 1);
        assert_eq!(m.boundary_faces.len(), 4);
        assert!((m.total_area() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn paper_mesh_size() {
        let m = generate_rect_mesh(50, 150, 0.1, 0.4).unwrap();
        assert_eq!(m.num_elements(), 15_000);
        assert!((m.total_area() - 0.04).abs() < 1e-12 * 0.04);
        assert!(m
            .boundary_faces
            .iter()
            .all(|f| f.tag == BoundaryTag::Pial));
    }

    #[test]
    fn invalid_dimensions_rejected() {
        assert!(generate_rect_mesh(0, 1, 1.0, 1.0).is_err());
        assert!(generate_rect_mesh(1, 1, 0.0, 1.0).is_err());
        assert!(generate_rect_mesh(1, 1, 1.0, -2.0).is_err());
    }

    #[test]
    fn text_round_trip() {
        let m = generate_rect_mesh(2, 2, 1.0, 1.0).unwrap();
        let text = m.to_text();
        let m2 = parse_mesh(&text, "mem").unwrap();
        assert_eq!(m.elements, m2.elements);
        assert_eq!(m.vertices, m2.vertices);
        assert_eq!(m.interior_faces.len(), m2.interior_faces.len());
        for (f, g) in m.boundary_faces.iter().zip(&m2.boundary_faces) {
            assert_eq!((f.elem, f.local, f.tag), (g.elem, g.local, g.tag));
        }
    }

    #[test]
    fn face_shared_by_three_elements_rejected() {
        // Three triangles all sharing edge (0, 1).
        let verts = vec![[0.0, 0.0], [1.0, 0.0], [0.5, 1.0], [0.5, -1.0], [1.5, 1.0]];
        let elems = vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]];
        let err = Mesh::from_parts(verts, elems, &[]).unwrap_err();
        assert!(err.to_string().contains("shared by 3"), "{err}");
    }

    #[test]
    fn dangling_vertex_index_rejected() {
        let text = "dgmesh 1\nvertices 3\n0 0\n1 0\n0 1\nelements 1\n0 1 7\nboundary 0\n";
        let err = parse_mesh(text, "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 7, .. }), "{err}");
    }

    #[test]
    fn untagged_boundary_rejected() {
        let verts = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let elems = vec![[0, 1, 2]];
        let err = Mesh::from_parts(verts, elems, &[]).unwrap_err();
        assert!(err.to_string().contains("no tag"), "{err}");
    }

    #[test]
    fn negatively_oriented_element_rejected() {
        let verts = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let elems = vec![[0, 2, 1]];
        let err = Mesh::from_parts(verts, elems, &[]).unwrap_err();
        assert!(err.to_string().contains("negatively oriented"), "{err}");
    }

    #[test]
    fn disk_indicator() {
        let d = SubdomainSpec::disk([0.08, 0.02], 5e-4).unwrap();
        assert!(d.contains([0.08, 0.02]));
        // Squared distance 5.0176e-4 just outside the threshold.
        assert!(!d.contains([0.08, 0.0424]));
        assert!(SubdomainSpec::Whole.contains([123.0, -4.0]));
    }

    #[test]
    fn vent_tags_survive_round_trip() {
        let mut m = generate_rect_mesh(2, 3, 1.0, 1.0).unwrap();
        // Retag the bottom edge as ventricular.
        let tags: Vec<_> = m
            .boundary_faces
            .iter()
            .map(|f| {
                let centroid_y =
                    0.5 * (m.vertices[f.verts[0]][1] + m.vertices[f.verts[1]][1]);
                let tag = if centroid_y == 0.0 {
                    BoundaryTag::Vent
                } else {
                    BoundaryTag::Pial
                };
                (f.elem, f.local, tag)
            })
            .collect();
        m = Mesh::from_parts(m.vertices.clone(), m.elements.clone(), &tags).unwrap();
        let n_vent = m
            .boundary_faces
            .iter()
            .filter(|f| f.tag == BoundaryTag::Vent)
            .count();
        assert_eq!(n_vent, 2);
        let m2 = parse_mesh(&m.to_text(), "mem").unwrap();
        let n_vent2 = m2
            .boundary_faces
            .iter()
            .filter(|f| f.tag == BoundaryTag::Vent)
            .count();
        assert_eq!(n_vent2, 2);
    }

    proptest! {
        #[test]
        fn structured_mesh_invariants(nx in 1usize..7, ny in 1usize..7,
                                      lx in 0.05f64..8.0, ly in 0.05f64..8.0) {
            let m = generate_rect_mesh(nx, ny, lx, ly).unwrap();
            prop_assert_eq!(m.num_elements(), 2 * nx * ny);

            // Partition of the domain.
            let area = m.total_area();
            prop_assert!((area - lx * ly).abs() <= 1e-12 * lx * ly);

            // Euler relation V - E + F = 1 on a simply connected domain.
            let v = m.num_vertices() as i64;
            let e = (m.interior_faces.len() + m.boundary_faces.len()) as i64;
            let f = m.num_elements() as i64;
            prop_assert_eq!(v - e + f, 1);

            // Interior normals: plus-side normal is minus the minus-side one.
            for face in &m.interior_faces {
                let (n_minus, _) = m.outward_normal(face.elems[1], face.local[1]);
                prop_assert!((face.normal[0] + n_minus[0]).abs() < 1e-14);
                prop_assert!((face.normal[1] + n_minus[1]).abs() < 1e-14);
                let norm = (face.normal[0].powi(2) + face.normal[1].powi(2)).sqrt();
                prop_assert!((norm - 1.0).abs() < 1e-14);
            }

            // Boundary normals point away from the domain centroid.
            let centroid = [lx / 2.0, ly / 2.0];
            for face in &m.boundary_faces {
                let a = m.vertices[face.verts[0]];
                let b = m.vertices[face.verts[1]];
                let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
                let d = [mid[0] - centroid[0], mid[1] - centroid[1]];
                prop_assert!(d[0] * face.normal[0] + d[1] * face.normal[1] > 0.0);
            }
        }
    }
}
