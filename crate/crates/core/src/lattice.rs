//! Periodic hypercubic lattices in one and two dimensions.
//!
//! Sites are numbered row-major, so the index order coincides with the
//! lexicographic order of `(row, col)` coordinates. Every site owns one
//! edge per axis, pointing to its `+1` neighbour with periodic wrap, and
//! the edge id is `dim * site + axis`.

use crate::error::{Error, Result};

pub type SiteId = usize;
pub type EdgeId = usize;

/// Lattice translation, one component per axis. For rings only the first
/// component is used.
pub type Shift = [i64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    /// Lexicographically smaller endpoint.
    pub a: SiteId,
    pub b: SiteId,
    pub axis: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TorusLattice {
    dim: usize,
    side: usize,
    edges: Vec<Edge>,
    // (edge, neighbour) pairs, 2*dim per site
    incident: Vec<(EdgeId, SiteId)>,
}

/// Builds the `side^dim` torus. Sides below 3 would create parallel edges
/// through the wraparound and are rejected.
pub fn build_torus(side: usize, dim: usize) -> Result<TorusLattice> {
    TorusLattice::new(side, dim)
}

impl TorusLattice {
    pub fn new(side: usize, dim: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::Geometry(format!("dimension {dim} not in {{1, 2}}")));
        }
        if side < 3 {
            return Err(Error::Geometry(format!(
                "side {side} < 3 gives a multigraph under periodic wrap"
            )));
        }
        let n = side.pow(dim as u32);
        let mut lat = TorusLattice {
            dim,
            side,
            edges: Vec::with_capacity(dim * n),
            incident: vec![(0, 0); 2 * dim * n],
        };
        let mut fill = vec![0usize; n];
        for site in 0..n {
            for axis in 0..dim {
                let nb = lat.step(site, axis, 1);
                let id = lat.edges.len();
                lat.edges.push(Edge {
                    a: site.min(nb),
                    b: site.max(nb),
                    axis,
                });
                for (s, t) in [(site, nb), (nb, site)] {
                    lat.incident[2 * dim * s + fill[s]] = (id, t);
                    fill[s] += 1;
                }
            }
        }
        Ok(lat)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn num_sites(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> Edge {
        self.edges[id]
    }

    /// Extent of each axis; a ring is treated as an `L x 1` grid.
    pub fn axis_sizes(&self) -> [usize; 2] {
        if self.dim == 2 {
            [self.side, self.side]
        } else {
            [self.side, 1]
        }
    }

    pub fn coords(&self, site: SiteId) -> [usize; 2] {
        let [_, w] = self.axis_sizes();
        [site / w, site % w]
    }

    /// `(row, col)` as written to output files; ring sites sit on row 0.
    pub fn row_col(&self, site: SiteId) -> (usize, usize) {
        let [c0, c1] = self.coords(site);
        if self.dim == 2 {
            (c0, c1)
        } else {
            (0, c0)
        }
    }

    pub fn site_from_row_col(&self, row: usize, col: usize) -> Result<SiteId> {
        let ok = if self.dim == 2 {
            row < self.side && col < self.side
        } else {
            row == 0 && col < self.side
        };
        if !ok {
            return Err(Error::Geometry(format!(
                "site ({row}, {col}) outside lattice"
            )));
        }
        Ok(if self.dim == 2 {
            row * self.side + col
        } else {
            col
        })
    }

    pub fn site_at(&self, coords: [i64; 2]) -> SiteId {
        let sizes = self.axis_sizes();
        let r = coords[0].rem_euclid(sizes[0] as i64) as usize;
        let c = coords[1].rem_euclid(sizes[1] as i64) as usize;
        r * sizes[1] + c
    }

    pub fn step(&self, site: SiteId, axis: usize, by: i64) -> SiteId {
        let [r, c] = self.coords(site);
        let mut p = [r as i64, c as i64];
        p[axis] += by;
        self.site_at(p)
    }

    pub fn shift_site(&self, site: SiteId, t: Shift) -> SiteId {
        let [r, c] = self.coords(site);
        let t1 = if self.dim == 2 { t[1] } else { 0 };
        self.site_at([r as i64 + t[0], c as i64 + t1])
    }

    pub fn edge_id(&self, site: SiteId, axis: usize) -> EdgeId {
        self.dim * site + axis
    }

    pub fn shift_edge(&self, edge: EdgeId, t: Shift) -> EdgeId {
        self.edge_id(self.shift_site(edge / self.dim, t), edge % self.dim)
    }

    /// `(edge, neighbour)` pairs of the `2 * dim` edges at `site`.
    pub fn incident(&self, site: SiteId) -> &[(EdgeId, SiteId)] {
        let k = 2 * self.dim;
        &self.incident[k * site..k * (site + 1)]
    }

    pub fn find_edge(&self, x: SiteId, y: SiteId) -> Option<EdgeId> {
        self.incident(x)
            .iter()
            .find(|&&(_, nb)| nb == y)
            .map(|&(e, _)| e)
    }
}

/// Types carrying per-site or per-edge data that can be moved by a lattice
/// translation.
pub trait Translate: Sized {
    fn translated(&self, lat: &TorusLattice, t: Shift) -> Self;
}

pub fn translate<T: Translate>(lat: &TorusLattice, t: Shift, x: &T) -> T {
    x.translated(lat, t)
}

/// Axis-aligned box of sites together with its interior edges `E(W)` and
/// boundary edges `dW`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Window {
    corner: [usize; 2],
    extent: [usize; 2],
    sites: Vec<SiteId>,
    member: Vec<bool>,
    interior: Vec<EdgeId>,
    boundary: Vec<EdgeId>,
}

/// Square window of the given side (an interval on a ring).
pub fn make_window(lat: &TorusLattice, side: usize, corner: SiteId) -> Result<Window> {
    let extent = if lat.dim() == 2 {
        [side, side]
    } else {
        [side, 1]
    };
    Window::rect(lat, lat.coords(corner), extent)
}

impl Window {
    pub fn rect(lat: &TorusLattice, corner: [usize; 2], extent: [usize; 2]) -> Result<Self> {
        let sizes = lat.axis_sizes();
        for a in 0..2 {
            if extent[a] == 0 || extent[a] > sizes[a] {
                return Err(Error::Geometry(format!(
                    "window extent {extent:?} does not fit lattice of side {}",
                    lat.side()
                )));
            }
            if corner[a] >= sizes[a] {
                return Err(Error::Geometry(format!(
                    "window corner {corner:?} outside lattice"
                )));
            }
        }
        let mut sites = Vec::with_capacity(extent[0] * extent[1]);
        let mut member = vec![false; lat.num_sites()];
        for i in 0..extent[0] {
            for j in 0..extent[1] {
                let s = lat.site_at([(corner[0] + i) as i64, (corner[1] + j) as i64]);
                sites.push(s);
                member[s] = true;
            }
        }
        // ordered by window site then axis, so translated windows list
        // corresponding edges in the same positions
        let mut interior = Vec::new();
        let mut boundary = Vec::new();
        for &s in &sites {
            for axis in 0..lat.dim() {
                let fwd = lat.step(s, axis, 1);
                if member[fwd] {
                    interior.push(lat.edge_id(s, axis));
                } else {
                    boundary.push(lat.edge_id(s, axis));
                }
                let back = lat.step(s, axis, -1);
                if !member[back] {
                    boundary.push(lat.edge_id(back, axis));
                }
            }
        }
        Ok(Window {
            corner,
            extent,
            sites,
            member,
            interior,
            boundary,
        })
    }

    /// The whole lattice as a window.
    pub fn full(lat: &TorusLattice) -> Self {
        Window::rect(lat, [0, 0], lat.axis_sizes()).expect("full window always fits")
    }

    pub fn corner(&self) -> [usize; 2] {
        self.corner
    }

    pub fn extent(&self) -> [usize; 2] {
        self.extent
    }

    /// Sites in row-major order starting at the corner.
    pub fn sites(&self) -> &[SiteId] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, site: SiteId) -> bool {
        self.member[site]
    }

    pub fn interior_edges(&self) -> &[EdgeId] {
        &self.interior
    }

    pub fn boundary_edges(&self) -> &[EdgeId] {
        &self.boundary
    }

    /// Edges with at least one endpoint in the window.
    pub fn touching_edges(&self) -> Vec<EdgeId> {
        let mut out: Vec<EdgeId> = self
            .interior
            .iter()
            .chain(&self.boundary)
            .copied()
            .collect();
        out.sort_unstable();
        out
    }
}

impl Translate for Window {
    fn translated(&self, lat: &TorusLattice, t: Shift) -> Self {
        let c = lat.coords(lat.shift_site(
            lat.site_at([self.corner[0] as i64, self.corner[1] as i64]),
            t,
        ));
        Window::rect(lat, c, self.extent).expect("translation preserves fit")
    }
}

/// Equal blocks tiling a window, ordered lexicographically by their corner
/// offset inside the window.
#[derive(Clone, Debug)]
pub struct BlockPartition {
    pub block_side: usize,
    pub blocks: Vec<Window>,
}

pub fn partition_blocks(lat: &TorusLattice, w: &Window, b: usize) -> Result<BlockPartition> {
    let [h, wd] = w.extent();
    let bx = if lat.dim() == 2 { [b, b] } else { [b, 1] };
    if b == 0 || h % bx[0] != 0 || wd % bx[1] != 0 {
        return Err(Error::Geometry(format!(
            "block side {b} does not divide window extent {:?}",
            w.extent()
        )));
    }
    let [r0, c0] = w.corner();
    let mut blocks = Vec::new();
    for i in (0..h).step_by(bx[0]) {
        for j in (0..wd).step_by(bx[1]) {
            let corner = lat.coords(lat.site_at([(r0 + i) as i64, (c0 + j) as i64]));
            blocks.push(Window::rect(lat, corner, bx)?);
        }
    }
    Ok(BlockPartition {
        block_side: b,
        blocks,
    })
}

/// Edges crossing from coordinate `offset` to `offset + 1` along `axis`.
/// Negating the couplings on a seam imposes antiperiodic boundary
/// conditions in that direction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Seam {
    pub axis: usize,
    pub offset: usize,
    pub edges: Vec<EdgeId>,
}

pub fn make_seam(lat: &TorusLattice, axis: usize, offset: usize) -> Result<Seam> {
    if axis >= lat.dim() {
        return Err(Error::Geometry(format!(
            "seam axis {axis} invalid for dimension {}",
            lat.dim()
        )));
    }
    if offset >= lat.side() {
        return Err(Error::Geometry(format!(
            "seam offset {offset} outside side {}",
            lat.side()
        )));
    }
    let edges = (0..lat.num_sites())
        .filter(|&s| lat.coords(s)[axis] == offset)
        .map(|s| lat.edge_id(s, axis))
        .collect();
    Ok(Seam {
        axis,
        offset,
        edges,
    })
}

impl Seam {
    /// True when no seam edge touches the window.
    pub fn clear_of(&self, w: &Window) -> bool {
        self.edges
            .iter()
            .all(|e| !w.interior_edges().contains(e) && !w.boundary_edges().contains(e))
    }
}

impl Translate for Seam {
    fn translated(&self, lat: &TorusLattice, t: Shift) -> Self {
        let off = (self.offset as i64 + t[self.axis]).rem_euclid(lat.side() as i64) as usize;
        make_seam(lat, self.axis, off).expect("translation preserves seam")
    }
}

/// Offset of an axis-0 seam placed in the middle of the gap below a window
/// anchored at row 0, so that it stays clear of the window and its boundary.
pub fn default_seam_offset(lat_side: usize, window_side: usize) -> Result<usize> {
    if lat_side < window_side + 2 {
        return Err(Error::Geometry(format!(
            "torus side {lat_side} leaves no seam clearance for window side {window_side}"
        )));
    }
    let gap = lat_side - window_side;
    Ok(window_side + gap / 2 - 1)
}
