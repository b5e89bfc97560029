//! Tessellation of a square domain into subdomains, knot placement on the
//! interface skeleton, per-knot patches and elongated side stencils.
//!
//! The domain is `[-L/2, L/2]^2`, split into an `m x m` grid of square
//! subdomains of side `H = L/m`. Knots sit on the interior grid lines with
//! constant spacing `dz = 1/n`, with a knot at every grid crossing and at
//! the intersections with the outer boundary. Every coordinate is an exact
//! multiple of `dz` along its line, so the whole construction is done on an
//! integer lattice and converted to physical coordinates once.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compass labels for the four sides of an axis-aligned rectangle.
///
/// The ordinal order (E < N < W < S) is the deterministic tie-break order
/// used when a trajectory segment crosses two sides at exactly the same
/// parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    East = 0,
    North = 1,
    West = 2,
    South = 3,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::East, Side::North, Side::West, Side::South];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Axis along which the side extends (arc-length axis).
    pub fn along_axis(self) -> Axis {
        match self {
            Side::East | Side::West => Axis::Y,
            Side::North | Side::South => Axis::X,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X = 0,
    Y = 1,
}

impl Axis {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn other(self) -> Axis {
        match self {
            Axis::X => Axis::Y,
            Axis::Y => Axis::X,
        }
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Rect { min, max }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] > self.min[0] && p[0] < self.max[0] && p[1] > self.min[1] && p[1] < self.max[1]
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Fixed coordinate of a side (x for E/W, y for N/S).
    pub fn side_coord(&self, side: Side) -> f64 {
        match side {
            Side::East => self.max[0],
            Side::North => self.max[1],
            Side::West => self.min[0],
            Side::South => self.min[1],
        }
    }

    /// Range of the side along its arc axis.
    pub fn side_span(&self, side: Side) -> (f64, f64) {
        match side.along_axis() {
            Axis::X => (self.min[0], self.max[0]),
            Axis::Y => (self.min[1], self.max[1]),
        }
    }
}

/// Discretization parameters for the square-domain tessellation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationConfig {
    /// Half of the domain side, so the domain is `[-half_side, half_side]^2`.
    pub half_side: f64,
    /// Number of subdomains per side (`m`), so `H = L/m`.
    pub grid_count: usize,
    /// Linear knot density (knots per unit length); `dz = 1/knot_density`.
    pub knot_density: f64,
    /// Number of knots appended past each stencil corner along the same
    /// grid line (truncated at the outer boundary).
    pub elongation: usize,
}

impl DiscretizationConfig {
    pub fn new(half_side: f64, grid_count: usize, knot_density: f64, elongation: usize) -> Self {
        DiscretizationConfig { half_side, grid_count, knot_density, elongation }
    }

    /// Full domain side `L`.
    pub fn side(&self) -> f64 {
        2.0 * self.half_side
    }

    /// Subdomain side `H = L/m`.
    pub fn subdomain_side(&self) -> f64 {
        self.side() / self.grid_count as f64
    }

    /// Knot spacing `dz = 1/n`.
    pub fn knot_spacing(&self) -> f64 {
        1.0 / self.knot_density
    }

    /// Geometric tolerance for on-boundary tests.
    pub fn tolerance(&self) -> f64 {
        1e-12 * self.side()
    }

    /// Knots per subdomain side, `n*H`, which must be a positive integer.
    pub fn knots_per_subdomain_side(&self) -> Result<usize> {
        let q = self.knot_density * self.subdomain_side();
        let rounded = q.round();
        if rounded < 1.0 || (q - rounded).abs() > 1e-9 * q.max(1.0) {
            return Err(Error::Config(format!(
                "n*H = {q} is not a positive integer (n = {}, H = {})",
                self.knot_density,
                self.subdomain_side()
            )));
        }
        Ok(rounded as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_side > 0.0) {
            return Err(Error::Config(format!("domain half-side must be positive, got {}", self.half_side)));
        }
        if self.grid_count < 2 {
            return Err(Error::Config(format!(
                "grid count m = {} leaves no interior interfaces (need m >= 2)",
                self.grid_count
            )));
        }
        if !(self.knot_density > 0.0) {
            return Err(Error::Config(format!("knot density must be positive, got {}", self.knot_density)));
        }
        self.knots_per_subdomain_side()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    /// Interface lying on a vertical grid line (constant x).
    Vertical,
    /// Interface lying on a horizontal grid line (constant y).
    Horizontal,
}

/// One interface: the H-long segment of an interior grid line shared by two
/// adjacent subdomains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InterfaceId {
    pub orientation: Orientation,
    /// Interior line index, 0-based (line j sits at coordinate -L/2 + (j+1)*H).
    pub line: usize,
    /// Segment index along the line, 0-based, 0..m.
    pub segment: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KnotKind {
    /// Strictly between two crossings on a single interface.
    Mid,
    /// At an interior grid crossing (intersection of two interior lines).
    Crossing,
    /// On the outer boundary; carries Dirichlet data.
    BoundaryDirichlet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Knot {
    /// Geometric (construction-order) index.
    pub index: usize,
    pub position: [f64; 2],
    pub kind: KnotKind,
    /// Interfaces this knot sits on.
    pub interfaces: Vec<InterfaceId>,
}

/// Per-side information for a patch.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PatchSide {
    /// Side lies on the outer (Dirichlet) boundary.
    pub dirichlet: bool,
    /// Stencil index when the side is an interior interface.
    pub stencil: Option<usize>,
}

/// The union of all subdomains containing the owner knot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Patch {
    pub owner: usize,
    pub rect: Rect,
    /// Indexed by `Side::index()`: E, N, W, S.
    pub sides: [PatchSide; 4],
}

impl Patch {
    pub fn interface_sides(&self) -> impl Iterator<Item = (Side, usize)> + '_ {
        Side::ALL
            .iter()
            .filter_map(move |&s| self.sides[s.index()].stencil.map(|st| (s, st)))
    }
}

/// Ordered, collinear, gap-free set of knots used to interpolate along one
/// patch side, possibly elongated past either corner.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stencil {
    /// Which side of the owning patch this stencil interpolates.
    pub side: Side,
    /// Axis along which arc length is measured.
    pub axis: Axis,
    /// Fixed coordinate of the grid line the stencil lies on.
    pub line_coord: f64,
    /// Physical point of the arc-length origin (the low corner of the side).
    pub origin: [f64; 2],
    /// Length of the patch side proper (corners at z = 0 and z = side_length).
    pub side_length: f64,
    /// Geometric knot indices, ascending in arc length.
    pub knots: Vec<usize>,
    /// Arc-length coordinate of each member relative to the origin
    /// (negative for members elongated before the low corner).
    pub arc: Vec<f64>,
    /// Number of members on the side proper (between and including corners).
    pub core_len: usize,
    /// Members elongated past the low / high corner.
    pub elongated_lo: usize,
    pub elongated_hi: usize,
}

/// Permutation from geometric knot indices to system indices. Dirichlet
/// knots occupy the last `dirichlet_count` system indices, which gives the
/// block structure `[[G*, *], [0, I]]` of the assembled matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnotOrdering {
    pub geometric_to_system: Vec<usize>,
    pub system_to_geometric: Vec<usize>,
    pub dirichlet_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Discretization {
    pub config: DiscretizationConfig,
    pub knots: Vec<Knot>,
    /// Indexed by geometric knot id; `None` for Dirichlet knots.
    pub patches: Vec<Option<Patch>>,
    pub stencils: Vec<Stencil>,
    pub ordering: KnotOrdering,
}

impl Discretization {
    pub fn knot_count(&self) -> usize {
        self.knots.len()
    }

    pub fn dirichlet_count(&self) -> usize {
        self.ordering.dirichlet_count
    }

    pub fn interior_count(&self) -> usize {
        self.knot_count() - self.dirichlet_count()
    }

    pub fn domain(&self) -> Rect {
        let a = self.config.half_side;
        Rect::new([-a, -a], [a, a])
    }

    /// Knot position by system index.
    pub fn position_by_system(&self, sys: usize) -> [f64; 2] {
        self.knots[self.ordering.system_to_geometric[sys]].position
    }

    /// Signed arc length of `point` along side `side` of `patch`, measured
    /// from the side's origin corner. Errors when the point is off the side
    /// beyond the geometric tolerance.
    pub fn arc_coordinate(&self, patch: &Patch, side: Side, point: [f64; 2]) -> Result<f64> {
        let tol = self.config.tolerance();
        let axis = side.along_axis();
        let fixed = point[axis.other().index()];
        let line = patch.rect.side_coord(side);
        if (fixed - line).abs() > tol {
            return Err(Error::Geometry(format!(
                "point {point:?} is off side {side:?} (line coordinate {line}, got {fixed})"
            )));
        }
        let (lo, hi) = patch.rect.side_span(side);
        let along = point[axis.index()];
        if along < lo - tol || along > hi + tol {
            return Err(Error::Geometry(format!(
                "point {point:?} is outside the span [{lo}, {hi}] of side {side:?}"
            )));
        }
        Ok(along - lo)
    }
}

/// Result of the tessellation validity check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TessellationCheck {
    pub valid: bool,
    pub reason: Option<String>,
}

/// A tessellation is valid when it has at least 9 subdomains, contains a
/// 3x3 block of floating subdomains, and every subdomain shares a side with
/// another. For the full m x m square grid this reduces to `m >= 5`: the
/// floating subdomains are the inner `(m-2) x (m-2)` block.
pub fn is_valid_tessellation(cfg: &DiscretizationConfig) -> Result<TessellationCheck> {
    cfg.validate()?;
    let m = cfg.grid_count;
    // Side-adjacency always holds on a full grid with m >= 2.
    if m >= 5 {
        return Ok(TessellationCheck { valid: true, reason: None });
    }
    let mut reason = format!(
        "no 3x3 floating subtessellation (inner floating block is {0}x{0}, need 3x3; m = {m} < 5)",
        m.saturating_sub(2)
    );
    if m * m < 9 {
        reason.push_str(&format!("; only {} subdomains (need at least 9)", m * m));
    }
    Ok(TessellationCheck { valid: false, reason: Some(reason) })
}

/// Integer-lattice knot key used during construction.
type LatticeKey = (i64, i64);

struct Builder {
    cfg: DiscretizationConfig,
    /// Lattice points per domain side (`n*L`), so coordinates run 0..=n_total.
    n_total: i64,
    /// Lattice points per subdomain side (`n*H`).
    q: i64,
    dz: f64,
    knots: Vec<Knot>,
    lookup: std::collections::HashMap<LatticeKey, usize>,
}

impl Builder {
    fn physical(&self, i: i64) -> f64 {
        -self.cfg.half_side + i as f64 * self.dz
    }

    fn is_interior_line(&self, i: i64) -> bool {
        i > 0 && i < self.n_total && i % self.q == 0
    }

    fn knot_at(&mut self, key: LatticeKey) -> usize {
        if let Some(&id) = self.lookup.get(&key) {
            return id;
        }
        let (ix, iy) = key;
        let on_boundary = ix == 0 || ix == self.n_total || iy == 0 || iy == self.n_total;
        let kind = if on_boundary {
            KnotKind::BoundaryDirichlet
        } else if self.is_interior_line(ix) && self.is_interior_line(iy) {
            KnotKind::Crossing
        } else {
            KnotKind::Mid
        };
        let id = self.knots.len();
        self.knots.push(Knot {
            index: id,
            position: [self.physical(ix), self.physical(iy)],
            kind,
            interfaces: Vec::new(),
        });
        self.lookup.insert(key, id);
        id
    }
}

/// Build the full discretization: knots, patches, stencils and the
/// Dirichlet-last ordering.
pub fn build_discretization(cfg: &DiscretizationConfig) -> Result<Discretization> {
    cfg.validate()?;
    let m = cfg.grid_count as i64;
    let per_sub = cfg.knots_per_subdomain_side()? as i64;
    let n_total = per_sub * m;
    let dz = cfg.subdomain_side() / per_sub as f64;

    let mut b = Builder {
        cfg: *cfg,
        n_total,
        q: per_sub,
        dz,
        knots: Vec::new(),
        lookup: std::collections::HashMap::new(),
    };

    // Knots along interior vertical lines, then interior horizontal lines.
    // Crossings are shared through the lattice lookup.
    for j in 1..m {
        let ix = j * per_sub;
        for iy in 0..=n_total {
            b.knot_at((ix, iy));
        }
    }
    for j in 1..m {
        let iy = j * per_sub;
        for ix in 0..=n_total {
            b.knot_at((ix, iy));
        }
    }

    // Interface ownership.
    for knot_id in 0..b.knots.len() {
        let (ix, iy) = {
            let k = &b.knots[knot_id];
            (
                ((k.position[0] + cfg.half_side) / dz).round() as i64,
                ((k.position[1] + cfg.half_side) / dz).round() as i64,
            )
        };
        let mut ifaces = Vec::new();
        if b.is_interior_line(ix) {
            let line = (ix / per_sub - 1) as usize;
            let seg_below = if iy > 0 { Some(((iy - 1) / per_sub) as usize) } else { None };
            let seg_above = if iy < n_total { Some((iy / per_sub) as usize) } else { None };
            if iy % per_sub == 0 {
                for seg in [seg_below, seg_above].into_iter().flatten() {
                    ifaces.push(InterfaceId { orientation: Orientation::Vertical, line, segment: seg });
                }
            } else {
                ifaces.push(InterfaceId {
                    orientation: Orientation::Vertical,
                    line,
                    segment: (iy / per_sub) as usize,
                });
            }
        }
        if b.is_interior_line(iy) {
            let line = (iy / per_sub - 1) as usize;
            let seg_below = if ix > 0 { Some(((ix - 1) / per_sub) as usize) } else { None };
            let seg_above = if ix < n_total { Some((ix / per_sub) as usize) } else { None };
            if ix % per_sub == 0 {
                for seg in [seg_below, seg_above].into_iter().flatten() {
                    ifaces.push(InterfaceId { orientation: Orientation::Horizontal, line, segment: seg });
                }
            } else {
                ifaces.push(InterfaceId {
                    orientation: Orientation::Horizontal,
                    line,
                    segment: (ix / per_sub) as usize,
                });
            }
        }
        b.knots[knot_id].interfaces = ifaces;
    }

    // Patches and stencils for non-Dirichlet knots.
    let half = cfg.half_side;
    let sub_h = cfg.subdomain_side();
    let mut patches: Vec<Option<Patch>> = vec![None; b.knots.len()];
    let mut stencils: Vec<Stencil> = Vec::new();

    for knot_id in 0..b.knots.len() {
        let knot = b.knots[knot_id].clone();
        if knot.kind == KnotKind::BoundaryDirichlet {
            continue;
        }
        let [x, y] = knot.position;
        let ix = ((x + half) / dz).round() as i64;
        let iy = ((y + half) / dz).round() as i64;
        let on_v = b.is_interior_line(ix);
        let on_h = b.is_interior_line(iy);

        let rect = match knot.kind {
            KnotKind::Crossing => Rect::new([x - sub_h, y - sub_h], [x + sub_h, y + sub_h]),
            KnotKind::Mid if on_v => {
                // Mid knot on a vertical interface: two side-by-side subdomains.
                let cell = iy / per_sub; // subdomain row containing the knot
                let y0 = -half + cell as f64 * sub_h;
                Rect::new([x - sub_h, y0], [x + sub_h, y0 + sub_h])
            }
            KnotKind::Mid => {
                debug_assert!(on_h);
                let cell = ix / per_sub;
                let x0 = -half + cell as f64 * sub_h;
                Rect::new([x0, y - sub_h], [x0 + sub_h, y + sub_h])
            }
            KnotKind::BoundaryDirichlet => unreachable!(),
        };

        let tol = cfg.tolerance();
        let mut sides = [PatchSide { dirichlet: false, stencil: None }; 4];
        for side in Side::ALL {
            let coord = rect.side_coord(side);
            if (coord.abs() - half).abs() <= tol {
                sides[side.index()] = PatchSide { dirichlet: true, stencil: None };
                continue;
            }
            let stencil = build_stencil(&mut b, &rect, side, cfg.elongation)?;
            let sid = stencils.len();
            stencils.push(stencil);
            sides[side.index()] = PatchSide { dirichlet: false, stencil: Some(sid) };
        }

        patches[knot_id] = Some(Patch { owner: knot_id, rect, sides });
    }

    // Dirichlet-last ordering, stable within each class.
    let n = b.knots.len();
    let mut geometric_to_system = vec![0usize; n];
    let mut system_to_geometric = Vec::with_capacity(n);
    for k in &b.knots {
        if k.kind != KnotKind::BoundaryDirichlet {
            system_to_geometric.push(k.index);
        }
    }
    let interior = system_to_geometric.len();
    for k in &b.knots {
        if k.kind == KnotKind::BoundaryDirichlet {
            system_to_geometric.push(k.index);
        }
    }
    for (sys, &geo) in system_to_geometric.iter().enumerate() {
        geometric_to_system[geo] = sys;
    }
    let ordering = KnotOrdering {
        geometric_to_system,
        system_to_geometric,
        dirichlet_count: n - interior,
    };

    Ok(Discretization { config: *cfg, knots: b.knots, patches, stencils, ordering })
}

fn build_stencil(b: &mut Builder, rect: &Rect, side: Side, elongation: usize) -> Result<Stencil> {
    let axis = side.along_axis();
    let line_coord = rect.side_coord(side);
    let (lo, hi) = rect.side_span(side);
    let half = b.cfg.half_side;
    let dz = b.dz;

    let line_i = ((line_coord + half) / dz).round() as i64;
    debug_assert!(b.is_interior_line(line_i), "stencil side must lie on an interior grid line");
    let lo_i = ((lo + half) / dz).round() as i64;
    let hi_i = ((hi + half) / dz).round() as i64;

    let start = (lo_i - elongation as i64).max(0);
    let end = (hi_i + elongation as i64).min(b.n_total);

    let mut knots = Vec::with_capacity((end - start + 1) as usize);
    let mut arc = Vec::with_capacity(knots.capacity());
    for i in start..=end {
        let key = match axis {
            Axis::X => (i, line_i),
            Axis::Y => (line_i, i),
        };
        let id = b.knot_at(key);
        knots.push(id);
        arc.push((i - lo_i) as f64 * dz);
    }

    let origin = match axis {
        Axis::X => [lo, line_coord],
        Axis::Y => [line_coord, lo],
    };

    Ok(Stencil {
        side,
        axis,
        line_coord,
        origin,
        side_length: hi - lo,
        knots,
        arc,
        core_len: (hi_i - lo_i + 1) as usize,
        elongated_lo: (lo_i - start) as usize,
        elongated_hi: (end - hi_i) as usize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> DiscretizationConfig {
        // L = 4, m = 2, n = 2, e = 0
        DiscretizationConfig::new(2.0, 2, 2.0, 0)
    }

    #[test]
    fn toy_counts() {
        let d = build_discretization(&toy()).unwrap();
        assert_eq!(d.knot_count(), 17);
        assert_eq!(d.dirichlet_count(), 4);
        let dirichlet: Vec<[f64; 2]> = d
            .knots
            .iter()
            .filter(|k| k.kind == KnotKind::BoundaryDirichlet)
            .map(|k| k.position)
            .collect();
        for p in [[0.0, -2.0], [0.0, 2.0], [-2.0, 0.0], [2.0, 0.0]] {
            assert!(
                dirichlet.iter().any(|q| (q[0] - p[0]).abs() < 1e-14 && (q[1] - p[1]).abs() < 1e-14),
                "missing Dirichlet knot at {p:?}"
            );
        }
    }

    #[test]
    fn toy_crossing_patch_is_whole_domain() {
        let d = build_discretization(&toy()).unwrap();
        let crossing = d.knots.iter().find(|k| k.kind == KnotKind::Crossing).unwrap();
        assert_eq!(crossing.position, [0.0, 0.0]);
        let patch = d.patches[crossing.index].as_ref().unwrap();
        assert_eq!(patch.rect, Rect::new([-2.0, -2.0], [2.0, 2.0]));
        for side in Side::ALL {
            assert!(patch.sides[side.index()].dirichlet);
            assert!(patch.sides[side.index()].stencil.is_none());
        }
    }

    #[test]
    fn toy_mid_patch_and_stencil() {
        let d = build_discretization(&toy()).unwrap();
        let mid = d
            .knots
            .iter()
            .find(|k| (k.position[0] - 0.0).abs() < 1e-14 && (k.position[1] - 1.0).abs() < 1e-14)
            .unwrap();
        assert_eq!(mid.kind, KnotKind::Mid);
        let patch = d.patches[mid.index].as_ref().unwrap();
        assert_eq!(patch.rect, Rect::new([-2.0, 0.0], [2.0, 2.0]));
        let mut iface_sides: Vec<Side> = patch.interface_sides().map(|(s, _)| s).collect();
        iface_sides.sort();
        assert_eq!(iface_sides, vec![Side::South]);
        let (_, sid) = patch.interface_sides().next().unwrap();
        let st = &d.stencils[sid];
        assert_eq!(st.knots.len(), 9);
        assert_eq!(st.core_len, 9);
        for (k, &id) in st.knots.iter().enumerate() {
            let p = d.knots[id].position;
            assert!((p[1] - 0.0).abs() < 1e-14);
            assert!((p[0] - (-2.0 + k as f64 * 0.5)).abs() < 1e-14);
            assert_eq!(st.arc[k], k as f64 * 0.5);
        }
    }

    #[test]
    fn arc_coordinate_examples() {
        let d = build_discretization(&toy()).unwrap();
        let mid = d
            .knots
            .iter()
            .find(|k| (k.position[0] - 0.0).abs() < 1e-14 && (k.position[1] - 1.0).abs() < 1e-14)
            .unwrap();
        let patch = d.patches[mid.index].as_ref().unwrap();
        assert_eq!(d.arc_coordinate(patch, Side::South, [-2.0, 0.0]).unwrap(), 0.0);
        assert_eq!(d.arc_coordinate(patch, Side::South, [0.5, 0.0]).unwrap(), 2.5);
        // Round trip on stencil members.
        let sid = patch.sides[Side::South.index()].stencil.unwrap();
        let st = &d.stencils[sid];
        for (k, &id) in st.knots.iter().enumerate() {
            let z = d.arc_coordinate(patch, Side::South, d.knots[id].position).unwrap();
            assert_eq!(z, st.arc[k]);
        }
        // Off-side point errors.
        assert!(d.arc_coordinate(patch, Side::South, [0.5, 0.3]).is_err());
    }

    #[test]
    fn validity_check() {
        let valid = is_valid_tessellation(&DiscretizationConfig::new(5.0, 5, 1.0, 0)).unwrap();
        assert!(valid.valid);
        let two = is_valid_tessellation(&toy()).unwrap();
        assert!(!two.valid);
        assert!(two.reason.unwrap().contains("no 3x3 floating subtessellation"));
        let three = is_valid_tessellation(&DiscretizationConfig::new(3.0, 3, 1.0, 0)).unwrap();
        assert!(!three.valid);
    }

    #[test]
    fn knot_count_formula() {
        for (m, n, l2) in [(2usize, 2.0, 2.0), (4, 4.0, 10.0), (5, 2.0, 5.0), (3, 1.0, 3.0)] {
            let cfg = DiscretizationConfig::new(l2, m, n, 3);
            let d = build_discretization(&cfg).unwrap();
            let nl = (n * 2.0 * l2).round() as usize;
            let expect = 2 * (m - 1) * (nl + 1) - (m - 1) * (m - 1);
            assert_eq!(d.knot_count(), expect, "m={m} n={n}");
            assert_eq!(d.dirichlet_count(), 4 * (m - 1));
        }
    }

    #[test]
    fn patch_areas() {
        let cfg = DiscretizationConfig::new(10.0, 4, 4.0, 3);
        let d = build_discretization(&cfg).unwrap();
        let h = cfg.subdomain_side();
        for k in &d.knots {
            match k.kind {
                KnotKind::Crossing => {
                    let p = d.patches[k.index].as_ref().unwrap();
                    assert!((p.rect.area() - 4.0 * h * h).abs() < 1e-9);
                }
                KnotKind::Mid => {
                    let p = d.patches[k.index].as_ref().unwrap();
                    assert!((p.rect.area() - 2.0 * h * h).abs() < 1e-9);
                    assert!(p.rect.contains(k.position), "owner inside patch");
                }
                KnotKind::BoundaryDirichlet => assert!(d.patches[k.index].is_none()),
            }
        }
    }

    #[test]
    fn stencils_collinear_and_gap_free() {
        let cfg = DiscretizationConfig::new(10.0, 4, 4.0, 3);
        let d = build_discretization(&cfg).unwrap();
        let dz = cfg.knot_spacing();
        for st in &d.stencils {
            assert_eq!(st.knots.len(), st.arc.len());
            for (j, &id) in st.knots.iter().enumerate() {
                let p = d.knots[id].position;
                let fixed = p[st.axis.other().index()];
                assert!((fixed - st.line_coord).abs() < 1e-12, "member off the stencil line");
                if j > 0 {
                    assert!((st.arc[j] - st.arc[j - 1] - dz).abs() < 1e-12, "gap in stencil");
                }
            }
            // Elongation never leaves the domain.
            for &id in &st.knots {
                let p = d.knots[id].position;
                assert!(p[0] >= -10.0 - 1e-12 && p[0] <= 10.0 + 1e-12);
                assert!(p[1] >= -10.0 - 1e-12 && p[1] <= 10.0 + 1e-12);
            }
        }
    }

    #[test]
    fn ordering_places_dirichlet_last() {
        let cfg = DiscretizationConfig::new(10.0, 4, 4.0, 3);
        let d = build_discretization(&cfg).unwrap();
        let n = d.knot_count();
        let md = d.dirichlet_count();
        for sys in 0..n {
            let geo = d.ordering.system_to_geometric[sys];
            let is_dir = d.knots[geo].kind == KnotKind::BoundaryDirichlet;
            assert_eq!(is_dir, sys >= n - md);
            assert_eq!(d.ordering.geometric_to_system[geo], sys);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(build_discretization(&DiscretizationConfig::new(2.0, 1, 2.0, 0)).is_err());
        // n*H = 0.75 is not an integer.
        assert!(build_discretization(&DiscretizationConfig::new(1.5, 4, 1.0, 0)).is_err());
    }
}
