//! Reference cell, thin periodic plate and mid-surface meshes.
//!
//! All meshes are structured boxes. Nodes are numbered with x fastest, then y,
//! then z; hexahedra use the VTK corner order.

use crate::error::{Error, Result};

/// Relative distance to the nearest grid line below which a gel box edge is
/// considered aligned and snapped without a warning.
pub const SNAP_TOL: f64 = 1e-9;

/// Sentinel for "no dof" in node-to-dof maps.
pub const NO_DOF: usize = usize::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Fiber,
    Gel,
}

/// Axis-aligned rectangle `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Rect {
    pub fn new(lo: [f64; 2], hi: [f64; 2]) -> Result<Self> {
        if !(hi[0] > lo[0] && hi[1] > lo[1]) || lo.iter().chain(hi.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Geometry(format!("degenerate rectangle {lo:?}..{hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn unit() -> Self {
        Self { lo: [0.0, 0.0], hi: [1.0, 1.0] }
    }

    pub fn width(&self) -> f64 {
        self.hi[0] - self.lo[0]
    }

    pub fn height(&self) -> f64 {
        self.hi[1] - self.lo[1]
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

/// Gel inclusion inside the reference cell `Y × (−1, 1)`, `Y = (0,1)²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellGeometry {
    pub gel_lo: [f64; 2],
    pub gel_hi: [f64; 2],
    /// Thickness span of the gel in `y3`; `(-1, 1)` is full thickness.
    pub gel_span: (f64, f64),
}

impl CellGeometry {
    /// Full-thickness gel box `(lo[0],hi[0]) × (lo[1],hi[1])`.
    pub fn new(gel_lo: [f64; 2], gel_hi: [f64; 2]) -> Result<Self> {
        Self::with_span(gel_lo, gel_hi, (-1.0, 1.0))
    }

    pub fn with_span(gel_lo: [f64; 2], gel_hi: [f64; 2], gel_span: (f64, f64)) -> Result<Self> {
        for a in 0..2 {
            if !(gel_lo[a] > 0.0 && gel_lo[a] < gel_hi[a] && gel_hi[a] < 1.0) {
                return Err(Error::Geometry(format!(
                    "gel box must lie strictly inside (0,1)^2, got axis {a}: ({}, {})",
                    gel_lo[a], gel_hi[a]
                )));
            }
        }
        if !(gel_span.0 >= -1.0 && gel_span.0 < gel_span.1 && gel_span.1 <= 1.0) {
            return Err(Error::Geometry(format!("gel thickness span {gel_span:?} not inside [-1,1]")));
        }
        Ok(Self { gel_lo, gel_hi, gel_span })
    }

    /// Square gel box `(lo, hi)²` through the full thickness.
    pub fn square(lo: f64, hi: f64) -> Result<Self> {
        Self::new([lo, lo], [hi, hi])
    }

    pub fn is_full_thickness(&self) -> bool {
        self.gel_span == (-1.0, 1.0)
    }

    /// In-plane gel area `|Y^g|`.
    pub fn gel_area(&self) -> f64 {
        (self.gel_hi[0] - self.gel_lo[0]) * (self.gel_hi[1] - self.gel_lo[1])
    }

    /// Phase of a point of the cell (half-open boxes).
    pub fn phase_at(&self, y: [f64; 3]) -> Phase {
        let inside = (0..2).all(|a| y[a] >= self.gel_lo[a] && y[a] < self.gel_hi[a])
            && y[2] >= self.gel_span.0
            && y[2] <= self.gel_span.1;
        if inside {
            Phase::Gel
        } else {
            Phase::Fiber
        }
    }
}

impl Default for CellGeometry {
    fn default() -> Self {
        Self { gel_lo: [0.25, 0.25], gel_hi: [0.75, 0.75], gel_span: (-1.0, 1.0) }
    }
}

fn snap(value: f64, per_unit: usize, offset: f64, what: &str) -> usize {
    let t = (value - offset) * per_unit as f64;
    let r = t.round();
    if (t - r).abs() / per_unit as f64 > SNAP_TOL {
        log::warn!(
            "{what} = {value} is not on the 1/{per_unit} grid; snapped to {}",
            offset + r / per_unit as f64
        );
    }
    r.max(0.0) as usize
}

/// Structured box of hexahedra.
#[derive(Clone, Debug, PartialEq)]
pub struct HexGrid {
    pub origin: [f64; 3],
    pub h: [f64; 3],
    /// Element counts per axis.
    pub dims: [usize; 3],
}

/// Corner offsets of the hexahedron in VTK order.
pub const HEX_CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// Local corner indices of the six faces: −x, +x, −y, +y, −z, +z.
pub const HEX_FACES: [[usize; 4]; 6] = [
    [0, 3, 7, 4],
    [1, 2, 6, 5],
    [0, 1, 5, 4],
    [3, 2, 6, 7],
    [0, 1, 2, 3],
    [4, 5, 6, 7],
];

impl HexGrid {
    pub fn num_nodes(&self) -> usize {
        (self.dims[0] + 1) * (self.dims[1] + 1) * (self.dims[2] + 1)
    }

    pub fn num_elements(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + (self.dims[0] + 1) * (j + (self.dims[1] + 1) * k)
    }

    pub fn node_ijk(&self, node: usize) -> [usize; 3] {
        let nx = self.dims[0] + 1;
        let ny = self.dims[1] + 1;
        [node % nx, (node / nx) % ny, node / (nx * ny)]
    }

    pub fn element_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn element_ijk(&self, e: usize) -> [usize; 3] {
        let (nx, ny) = (self.dims[0], self.dims[1]);
        [e % nx, (e / nx) % ny, e / (nx * ny)]
    }

    pub fn node_coord(&self, node: usize) -> [f64; 3] {
        let ijk = self.node_ijk(node);
        [
            self.origin[0] + ijk[0] as f64 * self.h[0],
            self.origin[1] + ijk[1] as f64 * self.h[1],
            self.origin[2] + ijk[2] as f64 * self.h[2],
        ]
    }

    pub fn element_nodes(&self, e: usize) -> [usize; 8] {
        let [i, j, k] = self.element_ijk(e);
        HEX_CORNERS.map(|c| self.node_index(i + c[0], j + c[1], k + c[2]))
    }

    /// Lower corner of element `e`.
    pub fn element_origin(&self, e: usize) -> [f64; 3] {
        let [i, j, k] = self.element_ijk(e);
        [
            self.origin[0] + i as f64 * self.h[0],
            self.origin[1] + j as f64 * self.h[1],
            self.origin[2] + k as f64 * self.h[2],
        ]
    }

    pub fn element_volume(&self) -> f64 {
        self.h[0] * self.h[1] * self.h[2]
    }

    /// Neighbor across local face `f` (see [`HEX_FACES`]), if inside the grid.
    pub fn face_neighbor(&self, e: usize, f: usize) -> Option<usize> {
        let [i, j, k] = self.element_ijk(e);
        let mut c = [i as isize, j as isize, k as isize];
        let axis = f / 2;
        c[axis] += if f.is_multiple_of(2) { -1 } else { 1 };
        if c[axis] < 0 || c[axis] >= self.dims[axis] as isize {
            None
        } else {
            Some(self.element_index(c[0] as usize, c[1] as usize, c[2] as usize))
        }
    }
}

/// Anything built on a hexahedral grid with a phase per element.
pub trait HexMesh {
    fn grid(&self) -> &HexGrid;
    fn phase(&self, e: usize) -> Phase;
}

/// Node subset carrying scalar dofs, with the elements that contribute to them.
#[derive(Clone, Debug, PartialEq)]
pub struct DofSubset {
    /// `node_to_dof[node]` or [`NO_DOF`].
    pub node_to_dof: Vec<usize>,
    pub dof_to_node: Vec<usize>,
    pub elements: Vec<usize>,
}

impl DofSubset {
    /// Dofs on the nodes of every element with `keep(e)`.
    pub fn from_elements(grid: &HexGrid, keep: impl Fn(usize) -> bool) -> Self {
        let mut node_to_dof = vec![NO_DOF; grid.num_nodes()];
        let mut elements = Vec::new();
        let mut marked = vec![false; grid.num_nodes()];
        for e in 0..grid.num_elements() {
            if keep(e) {
                elements.push(e);
                for n in grid.element_nodes(e) {
                    marked[n] = true;
                }
            }
        }
        let mut dof_to_node = Vec::new();
        for (n, &m) in marked.iter().enumerate() {
            if m {
                node_to_dof[n] = dof_to_node.len();
                dof_to_node.push(n);
            }
        }
        Self { node_to_dof, dof_to_node, elements }
    }

    /// Dofs on the nodes of the gel elements of `mesh`.
    pub fn gel<M: HexMesh + ?Sized>(mesh: &M) -> Self {
        Self::from_elements(mesh.grid(), |e| mesh.phase(e) == Phase::Gel)
    }

    pub fn len(&self) -> usize {
        self.dof_to_node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dof_to_node.is_empty()
    }
}

/// A boundary facet of a sub-region of a hexahedral grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Facet {
    /// Element on the inside of the region.
    pub element: usize,
    /// Local face index, see [`HEX_FACES`].
    pub face: usize,
    pub nodes: [usize; 4],
    /// Outward unit normal of the region.
    pub normal: [f64; 3],
    pub area: f64,
    /// True when the other side is an element of the grid (an interface).
    pub interior: bool,
}

/// Boundary facets of the union of elements with `inside(e)`.
pub fn region_boundary(grid: &HexGrid, inside: impl Fn(usize) -> bool) -> Vec<Facet> {
    let mut out = Vec::new();
    for e in 0..grid.num_elements() {
        if !inside(e) {
            continue;
        }
        let nodes = grid.element_nodes(e);
        for f in 0..6 {
            let nb = grid.face_neighbor(e, f);
            if nb.is_some_and(&inside) {
                continue;
            }
            let axis = f / 2;
            let mut normal = [0.0; 3];
            normal[axis] = if f % 2 == 0 { -1.0 } else { 1.0 };
            let area = grid.h[(axis + 1) % 3] * grid.h[(axis + 2) % 3];
            out.push(Facet {
                element: e,
                face: f,
                nodes: HEX_FACES[f].map(|c| nodes[c]),
                normal,
                area,
                interior: nb.is_some(),
            });
        }
    }
    out
}

/// Number of face-connected components among elements with `inside(e)`.
pub fn count_components(grid: &HexGrid, inside: impl Fn(usize) -> bool) -> usize {
    let ne = grid.num_elements();
    let mut seen = vec![false; ne];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..ne {
        if seen[start] || !inside(start) {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(e) = stack.pop() {
            for f in 0..6 {
                if let Some(nb) = grid.face_neighbor(e, f) {
                    if !seen[nb] && inside(nb) {
                        seen[nb] = true;
                        stack.push(nb);
                    }
                }
            }
        }
    }
    count
}

/// Element index ranges of the gel box on an `n`-per-unit cell grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GelIndexBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl GelIndexBox {
    pub fn contains(&self, ijk: [usize; 3]) -> bool {
        (0..3).all(|a| ijk[a] >= self.lo[a] && ijk[a] < self.hi[a])
    }
}

/// Periodicity-cell mesh over `[0,1]² × [−1,1]`.
#[derive(Clone, Debug)]
pub struct CellMesh {
    /// Geometry after grid snapping.
    pub geometry: CellGeometry,
    pub n: usize,
    pub grid: HexGrid,
    pub phases: Vec<Phase>,
    pub gel_box: GelIndexBox,
    /// `(slave, master)` pairs; slaves lie on `y1 = 1` or `y2 = 1`.
    pub periodic: Vec<(usize, usize)>,
    /// Fiber/gel interface facets, normals pointing out of the gel.
    pub interface: Vec<Facet>,
}

impl HexMesh for CellMesh {
    fn grid(&self) -> &HexGrid {
        &self.grid
    }
    fn phase(&self, e: usize) -> Phase {
        self.phases[e]
    }
}

/// Snap the gel box onto the grid with `n` elements per unit length.
pub fn snap_gel_box(geom: &CellGeometry, n: usize) -> Result<(GelIndexBox, CellGeometry)> {
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..2 {
        lo[a] = snap(geom.gel_lo[a], n, 0.0, "gel box lower edge");
        hi[a] = snap(geom.gel_hi[a], n, 0.0, "gel box upper edge");
        if lo[a] < 1 || hi[a] + 1 > n {
            return Err(Error::Geometry(format!(
                "fiber wall thinner than one grid cell at n={n} along axis {a} (gel box ({}, {}))",
                geom.gel_lo[a], geom.gel_hi[a]
            )));
        }
        if hi[a] <= lo[a] {
            return Err(Error::Geometry(format!("gel box collapses on the n={n} grid along axis {a}")));
        }
    }
    lo[2] = snap(geom.gel_span.0, n, -1.0, "gel span lower edge");
    hi[2] = snap(geom.gel_span.1, n, -1.0, "gel span upper edge").min(2 * n);
    if hi[2] <= lo[2] {
        return Err(Error::Geometry(format!("gel thickness span collapses on the n={n} grid")));
    }
    let h = 1.0 / n as f64;
    let snapped = CellGeometry {
        gel_lo: [lo[0] as f64 * h, lo[1] as f64 * h],
        gel_hi: [hi[0] as f64 * h, hi[1] as f64 * h],
        gel_span: (-1.0 + lo[2] as f64 * h, -1.0 + hi[2] as f64 * h),
    };
    Ok((GelIndexBox { lo, hi }, snapped))
}

/// The `n × n × 2n` grid of `[0,1]² × [−1,1]`.
pub fn cell_grid(n: usize) -> HexGrid {
    let h = 1.0 / n as f64;
    HexGrid { origin: [0.0, 0.0, -1.0], h: [h, h, h], dims: [n, n, 2 * n] }
}

/// `(slave, master)` node pairs identifying `y1 = 1` with `y1 = 0` and
/// `y2 = 1` with `y2 = 0`.
pub fn periodic_pairs(grid: &HexGrid) -> Vec<(usize, usize)> {
    let [nx, ny, nz] = grid.dims;
    let mut periodic = Vec::new();
    for k in 0..=nz {
        for j in 0..=ny {
            periodic.push((grid.node_index(nx, j, k), grid.node_index(0, j, k)));
        }
        for i in 0..nx {
            periodic.push((grid.node_index(i, ny, k), grid.node_index(i, 0, k)));
        }
    }
    periodic
}

/// Build the `n × n × 2n` cell mesh.
pub fn build_cell_mesh(geom: &CellGeometry, n: usize) -> Result<CellMesh> {
    if n < 2 {
        return Err(Error::Geometry(format!("cell subdivisions must be >= 2, got {n}")));
    }
    let (gel_box, geometry) = snap_gel_box(geom, n)?;
    let grid = cell_grid(n);
    let phases: Vec<Phase> = (0..grid.num_elements())
        .map(|e| if gel_box.contains(grid.element_ijk(e)) { Phase::Gel } else { Phase::Fiber })
        .collect();
    let periodic = periodic_pairs(&grid);

    let interface = region_boundary(&grid, |e| phases[e] == Phase::Gel)
        .into_iter()
        .filter(|f| f.interior)
        .collect();

    Ok(CellMesh { geometry, n, grid, phases, gel_box, periodic, interface })
}

impl CellMesh {
    /// `|𝒴| = 2`.
    pub const VOLUME: f64 = 2.0;

    pub fn phase_volume(&self, phase: Phase) -> f64 {
        self.phases.iter().filter(|&&p| p == phase).count() as f64 * self.grid.element_volume()
    }

    /// Nodes on the fiber/gel interface.
    pub fn interface_nodes(&self) -> Vec<usize> {
        let mut mark = vec![false; self.grid.num_nodes()];
        for f in &self.interface {
            for &n in &f.nodes {
                mark[n] = true;
            }
        }
        (0..mark.len()).filter(|&n| mark[n]).collect()
    }
}

/// Thin plate `ω × (−ε, ε)` tiled by ε-scaled copies of the cell mesh.
#[derive(Clone, Debug)]
pub struct MicroMesh {
    pub eps: f64,
    pub omega: Rect,
    /// Per-cell subdivisions (same `n` as the cell mesh).
    pub n: usize,
    /// Number of cells along each in-plane axis.
    pub cells: [usize; 2],
    /// Snapped cell geometry.
    pub geometry: CellGeometry,
    pub grid: HexGrid,
    pub phases: Vec<Phase>,
    /// Cell index `k1 + cells[0]·k2` per element.
    pub cell_of_element: Vec<usize>,
    pub lateral_nodes: Vec<usize>,
    pub is_lateral: Vec<bool>,
    pub gel_dofs: DofSubset,
}

impl HexMesh for MicroMesh {
    fn grid(&self) -> &HexGrid {
        &self.grid
    }
    fn phase(&self, e: usize) -> Phase {
        self.phases[e]
    }
}

/// Build the micro mesh of `Ω_ε`.
pub fn build_micro_mesh(geom: &CellGeometry, eps: f64, omega: &Rect, n: usize) -> Result<MicroMesh> {
    if !(eps > 0.0) {
        return Err(Error::Geometry(format!("cell size must be positive, got {eps}")));
    }
    if n < 2 {
        return Err(Error::Geometry(format!("cell subdivisions must be >= 2, got {n}")));
    }
    let (gel_box, geometry) = snap_gel_box(geom, n)?;
    let mut cells = [0usize; 2];
    for a in 0..2 {
        let len = omega.hi[a] - omega.lo[a];
        let count = len / eps;
        let r = count.round();
        if r < 1.0 || (count - r).abs() > 1e-9 * count.max(1.0) {
            return Err(Error::Geometry(format!(
                "ω edge {len} along axis {a} is not an integer multiple of ε = {eps}"
            )));
        }
        cells[a] = r as usize;
    }
    let h = eps / n as f64;
    let grid = HexGrid {
        origin: [omega.lo[0], omega.lo[1], -eps],
        h: [h, h, h],
        dims: [cells[0] * n, cells[1] * n, 2 * n],
    };
    let ne = grid.num_elements();
    let mut phases = Vec::with_capacity(ne);
    let mut cell_of_element = Vec::with_capacity(ne);
    for e in 0..ne {
        let [i, j, k] = grid.element_ijk(e);
        let local = [i % n, j % n, k];
        phases.push(if gel_box.contains(local) { Phase::Gel } else { Phase::Fiber });
        cell_of_element.push(i / n + cells[0] * (j / n));
    }
    let nn = grid.num_nodes();
    let mut is_lateral = vec![false; nn];
    let mut lateral_nodes = Vec::new();
    for (node, lat) in is_lateral.iter_mut().enumerate() {
        let [i, j, _] = grid.node_ijk(node);
        if i == 0 || j == 0 || i == grid.dims[0] || j == grid.dims[1] {
            *lat = true;
            lateral_nodes.push(node);
        }
    }
    let gel_dofs = DofSubset::from_elements(&grid, |e| phases[e] == Phase::Gel);
    Ok(MicroMesh {
        eps,
        omega: *omega,
        n,
        cells,
        geometry,
        grid,
        phases,
        cell_of_element,
        lateral_nodes,
        is_lateral,
        gel_dofs,
    })
}

impl MicroMesh {
    pub fn num_cells(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    /// Phase from the fractional-part rule `phase_cell({x'/ε}, x3/ε)`.
    pub fn phase_at(&self, x: [f64; 3]) -> Phase {
        let frac = |v: f64| v - v.floor();
        let y = [
            frac((x[0] - self.omega.lo[0]) / self.eps),
            frac((x[1] - self.omega.lo[1]) / self.eps),
            x[2] / self.eps,
        ];
        self.geometry.phase_at(y)
    }

    /// Grid index of the node of cell `k` at local cell-node `(i, j, kz)`.
    pub fn cell_node(&self, cell: usize, i: usize, j: usize, kz: usize) -> usize {
        let k1 = cell % self.cells[0];
        let k2 = cell / self.cells[0];
        self.grid.node_index(k1 * self.n + i, k2 * self.n + j, kz)
    }

    /// Micro element of cell `k` at local cell-element `(i, j, kz)`.
    pub fn cell_element(&self, cell: usize, i: usize, j: usize, kz: usize) -> usize {
        let k1 = cell % self.cells[0];
        let k2 = cell / self.cells[0];
        self.grid.element_index(k1 * self.n + i, k2 * self.n + j, kz)
    }

    /// Lower in-plane corner of cell `k`.
    pub fn cell_origin(&self, cell: usize) -> [f64; 2] {
        let k1 = cell % self.cells[0];
        let k2 = cell / self.cells[0];
        [self.omega.lo[0] + k1 as f64 * self.eps, self.omega.lo[1] + k2 as f64 * self.eps]
    }
}

/// Rectangle mesh of the mid-surface `ω`.
#[derive(Clone, Debug)]
pub struct PlateMesh {
    pub omega: Rect,
    pub m: usize,
    pub h: [f64; 2],
    pub nodes: Vec<[f64; 2]>,
    /// Counter-clockwise corners.
    pub elements: Vec<[usize; 4]>,
    pub boundary_nodes: Vec<usize>,
    pub is_boundary: Vec<bool>,
}

pub fn build_plate_mesh(omega: &Rect, m: usize) -> Result<PlateMesh> {
    if m < 2 {
        return Err(Error::Geometry(format!("plate subdivisions must be >= 2, got {m}")));
    }
    let h = [omega.width() / m as f64, omega.height() / m as f64];
    let idx = |i: usize, j: usize| i + (m + 1) * j;
    let mut nodes = Vec::with_capacity((m + 1) * (m + 1));
    let mut is_boundary = Vec::with_capacity((m + 1) * (m + 1));
    let mut boundary_nodes = Vec::new();
    for j in 0..=m {
        for i in 0..=m {
            let x = if i == m { omega.hi[0] } else { omega.lo[0] + i as f64 * h[0] };
            let y = if j == m { omega.hi[1] } else { omega.lo[1] + j as f64 * h[1] };
            nodes.push([x, y]);
            let b = i == 0 || j == 0 || i == m || j == m;
            if b {
                boundary_nodes.push(idx(i, j));
            }
            is_boundary.push(b);
        }
    }
    let mut elements = Vec::with_capacity(m * m);
    for j in 0..m {
        for i in 0..m {
            elements.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    Ok(PlateMesh { omega: *omega, m, h, nodes, elements, boundary_nodes, is_boundary })
}

impl PlateMesh {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Element containing `x` and the local coordinates in `[0,1]²`.
    pub fn locate(&self, x: [f64; 2]) -> (usize, [f64; 2]) {
        let mut ij = [0usize; 2];
        let mut s = [0.0; 2];
        for a in 0..2 {
            let t = (x[a] - self.omega.lo[a]) / self.h[a];
            let i = (t.floor().max(0.0) as usize).min(self.m - 1);
            ij[a] = i;
            s[a] = t - i as f64;
        }
        (ij[0] + self.m * ij[1], s)
    }

    /// Lower-left corner of element `e`.
    pub fn element_origin(&self, e: usize) -> [f64; 2] {
        self.nodes[self.elements[e][0]]
    }
}
