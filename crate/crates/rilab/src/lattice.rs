//! Integer-lattice geometry: sites, finite site sets, blow-ups, boundaries,
//! and nearest-neighbor connectivity queries.
//!
//! Everything here is exact integer/rational geometry. Adjacency is always
//! nearest-neighbor (`l^1` distance one); there is no diagonal option.

use std::collections::VecDeque;
use std::fmt;
use std::io::{BufRead, Write};

use indexmap::IndexSet;
use smallvec::SmallVec;

use crate::{Error, Result};

/// Lattice coordinate. Windows at desk scale stay well inside `i32`.
pub type Coord = i32;

/// A point of `Z^d`. Dimensions up to four are stored inline.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site(SmallVec<[Coord; 4]>);

impl Site {
    pub fn new(coords: impl AsRef<[Coord]>) -> Self {
        Site(SmallVec::from_slice(coords.as_ref()))
    }

    /// The origin of `Z^d`.
    pub fn origin(dim: usize) -> Self {
        Site(smallvec::smallvec![0; dim])
    }

    /// `k`-th unit vector scaled by `c`.
    pub fn unit(dim: usize, axis: usize, c: Coord) -> Self {
        let mut v: SmallVec<[Coord; 4]> = smallvec::smallvec![0; dim];
        v[axis] = c;
        Site(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[Coord] {
        &self.0
    }

    /// Neighbor one step along `axis` in direction `dir` (+1 or -1).
    pub fn step(&self, axis: usize, dir: Coord) -> Site {
        let mut v = self.0.clone();
        v[axis] += dir;
        Site(v)
    }

    /// All `2d` nearest neighbors.
    pub fn neighbors(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.dim()).flat_map(move |a| [self.step(a, 1), self.step(a, -1)])
    }

    /// Squared Euclidean norm, in `i64` to avoid overflow.
    pub fn norm2(&self) -> i64 {
        self.0.iter().map(|&c| c as i64 * c as i64).sum()
    }

    /// Squared Euclidean distance to another site.
    pub fn dist2(&self, other: &Site) -> i64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(&a, &b)| {
                let d = a as i64 - b as i64;
                d * d
            })
            .sum()
    }

    /// Sup-norm.
    pub fn norm_inf(&self) -> Coord {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    pub fn is_neighbor_of(&self, other: &Site) -> bool {
        let mut total = 0i64;
        for (a, b) in self.0.iter().zip(other.0.iter()) {
            total += (a - b).abs() as i64;
            if total > 1 {
                return false;
            }
        }
        total == 1
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// A finite, deduplicated set of sites of a fixed dimension, with fast
/// membership queries and a stable insertion order.
#[derive(Clone, Debug)]
pub struct SiteSet {
    dim: usize,
    sites: IndexSet<Site>,
}

impl SiteSet {
    pub fn new(dim: usize) -> Self {
        SiteSet {
            dim,
            sites: IndexSet::new(),
        }
    }

    pub fn from_sites(dim: usize, iter: impl IntoIterator<Item = Site>) -> Result<Self> {
        let mut s = SiteSet::new(dim);
        for site in iter {
            s.insert(site)?;
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn insert(&mut self, site: Site) -> Result<bool> {
        if site.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: site.dim(),
            });
        }
        Ok(self.sites.insert(site))
    }

    pub fn contains(&self, site: &Site) -> bool {
        self.sites.contains(site)
    }

    /// Position of a site in insertion order, if present.
    pub fn index_of(&self, site: &Site) -> Option<usize> {
        self.sites.get_index_of(site)
    }

    pub fn get(&self, index: usize) -> Option<&Site> {
        self.sites.get_index(index)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Site> + '_ {
        self.sites.iter()
    }

    pub fn union(&self, other: &SiteSet) -> Result<SiteSet> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut out = self.clone();
        for s in other.iter() {
            out.sites.insert(s.clone());
        }
        Ok(out)
    }

    pub fn difference(&self, other: &SiteSet) -> SiteSet {
        let sites = self
            .sites
            .iter()
            .filter(|s| !other.contains(s))
            .cloned()
            .collect();
        SiteSet {
            dim: self.dim,
            sites,
        }
    }

    pub fn intersects(&self, other: &SiteSet) -> bool {
        let (small, big) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.iter().any(|s| big.contains(s))
    }

    /// Writes the set as newline-delimited integer tuples, one site per line,
    /// space-separated coordinates, in insertion order.
    pub fn write_tuples(&self, w: &mut impl Write) -> Result<()> {
        for s in self.iter() {
            writeln!(w, "{s}")?;
        }
        Ok(())
    }

    /// Reads a set in the `write_tuples` format.
    pub fn read_tuples(dim: usize, r: &mut impl BufRead) -> Result<SiteSet> {
        let mut set = SiteSet::new(dim);
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let coords: SmallVec<[Coord; 4]> = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<Coord>()
                        .map_err(|e| Error::InvalidParameter(format!("bad coordinate {t:?}: {e}")))
                })
                .collect::<Result<_>>()?;
            set.insert(Site(coords))?;
        }
        Ok(set)
    }
}

impl<'a> IntoIterator for &'a SiteSet {
    type Item = &'a Site;
    type IntoIter = indexmap::set::Iter<'a, Site>;
    fn into_iter(self) -> Self::IntoIter {
        self.sites.iter()
    }
}

/// Kind of compact continuum body used for blow-ups.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    /// Closed Euclidean ball of the given radius.
    Ball { radius: f64 },
    /// Axis-aligned box `[c - h, c + h]^d` with half-side `h`.
    Box { half_side: f64 },
    /// A single point.
    Point,
}

/// A compact continuum body `K` in `R^d`, described by kind and center.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub center: Vec<f64>,
}

impl ShapeSpec {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<ShapeSpec> {
        if radius <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        Ok(ShapeSpec {
            kind: ShapeKind::Ball { radius },
            center,
        })
    }

    pub fn cube(center: Vec<f64>, half_side: f64) -> Result<ShapeSpec> {
        if half_side <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "box half-side must be positive, got {half_side}"
            )));
        }
        Ok(ShapeSpec {
            kind: ShapeKind::Box { half_side },
            center,
        })
    }

    pub fn point(center: Vec<f64>) -> ShapeSpec {
        ShapeSpec {
            kind: ShapeKind::Point,
            center,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Euclidean distance from a continuum point to the body.
    pub fn euclid_dist(&self, z: &[f64]) -> f64 {
        match self.kind {
            ShapeKind::Point => {
                let d2: f64 = z
                    .iter()
                    .zip(&self.center)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                d2.sqrt()
            }
            ShapeKind::Ball { radius } => {
                let d2: f64 = z
                    .iter()
                    .zip(&self.center)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2.sqrt() - radius).max(0.0)
            }
            ShapeKind::Box { half_side } => {
                let d2: f64 = z
                    .iter()
                    .zip(&self.center)
                    .map(|(a, b)| {
                        let g = ((a - b).abs() - half_side).max(0.0);
                        g * g
                    })
                    .sum();
                d2.sqrt()
            }
        }
    }

    /// Whether the continuum point lies in the closed `fat`-neighborhood of
    /// the body (Euclidean fattening).
    pub fn contains_fattened(&self, z: &[f64], fat: f64) -> bool {
        self.euclid_dist(z) <= fat
    }

    /// Exact test for `d_inf(x, N*K^fat) <= 1`, where `K^fat` is the closed
    /// Euclidean `fat`-neighborhood of the shape. Equivalent to asking whether
    /// the unit sup-norm cube around `x` meets the fattened homothetic body.
    fn within_one_of_blowup(&self, x: &Site, n: u32, fat: f64) -> bool {
        let n = n as f64;
        let nfat = n * fat;
        match self.kind {
            ShapeKind::Point => {
                // d_inf(x, Nc)^ <= 1 + N*fat is wrong in general for the
                // fattened point (Euclidean ball of radius N*fat); treat the
                // point as a zero-radius ball.
                let d2: f64 = x
                    .coords()
                    .iter()
                    .zip(&self.center)
                    .map(|(&a, b)| {
                        let g = ((a as f64 - n * b).abs() - 1.0).max(0.0);
                        g * g
                    })
                    .sum();
                d2.sqrt() <= nfat
            }
            ShapeKind::Ball { radius } => {
                // Unit cube around x meets the ball of radius N*(radius+fat)
                // iff the Euclidean distance from the center to the cube is
                // within that radius.
                let d2: f64 = x
                    .coords()
                    .iter()
                    .zip(&self.center)
                    .map(|(&a, b)| {
                        let g = ((a as f64 - n * b).abs() - 1.0).max(0.0);
                        g * g
                    })
                    .sum();
                d2.sqrt() <= n * radius + nfat
            }
            ShapeKind::Box { half_side } => {
                // Distance between two axis-aligned boxes is the Euclidean
                // norm of the per-coordinate gaps.
                let d2: f64 = x
                    .coords()
                    .iter()
                    .zip(&self.center)
                    .map(|(&a, b)| {
                        let g = ((a as f64 - n * b).abs() - 1.0 - n * half_side).max(0.0);
                        g * g
                    })
                    .sum();
                d2.sqrt() <= nfat
            }
        }
    }

    /// Conservative per-coordinate half-extent of `N*K^fat` plus one.
    fn scan_half_extent(&self, n: u32, fat: f64) -> f64 {
        let n = n as f64;
        let r = match self.kind {
            ShapeKind::Point => 0.0,
            ShapeKind::Ball { radius } => radius,
            ShapeKind::Box { half_side } => half_side,
        };
        n * (r + fat) + 1.0
    }
}

/// Discrete blow-up `{x in Z^d : d_inf(x, N*K) <= 1}` of a compact body.
pub fn blow_up(shape: &ShapeSpec, n: u32, dim: usize) -> Result<SiteSet> {
    blow_up_fattened(shape, 0.0, n, dim)
}

/// Discrete blow-up of the Euclidean `fat`-neighborhood `K^fat` of the body:
/// `{x in Z^d : d_inf(x, N*K^fat) <= 1}`. `fat = 0` recovers `blow_up`.
pub fn blow_up_fattened(shape: &ShapeSpec, fat: f64, n: u32, dim: usize) -> Result<SiteSet> {
    if n == 0 {
        return Err(Error::InvalidParameter("blow-up requires N >= 1".into()));
    }
    if fat < 0.0 {
        return Err(Error::InvalidParameter(
            "fattening must be nonnegative".into(),
        ));
    }
    if shape.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: shape.dim(),
        });
    }
    let mut out = SiteSet::new(dim);
    let half = shape.scan_half_extent(n, fat);
    let lo: Vec<Coord> = shape
        .center
        .iter()
        .map(|c| (c * n as f64 - half).floor() as Coord)
        .collect();
    let hi: Vec<Coord> = shape
        .center
        .iter()
        .map(|c| (c * n as f64 + half).ceil() as Coord)
        .collect();
    let mut cursor: SmallVec<[Coord; 4]> = lo.iter().copied().collect();
    'scan: loop {
        let site = Site(cursor.clone());
        if shape.within_one_of_blowup(&site, n, fat) {
            out.sites.insert(site);
        }
        // odometer increment over the bounding box
        for axis in 0..dim {
            cursor[axis] += 1;
            if cursor[axis] <= hi[axis] {
                continue 'scan;
            }
            cursor[axis] = lo[axis];
        }
        break;
    }
    Ok(out)
}

/// Outer boundary, inner boundary, and closure of a finite site set.
///
/// `outer = {x not in S : exists y in S, |x-y| = 1}`,
/// `inner = {x in S : exists y not in S, |x-y| = 1}`,
/// `closure = S ∪ outer`.
pub fn boundaries(s: &SiteSet) -> (SiteSet, SiteSet, SiteSet) {
    let dim = s.dim();
    let mut outer = SiteSet::new(dim);
    let mut inner = SiteSet::new(dim);
    let mut closure = s.clone();
    for x in s.iter() {
        let mut on_inner = false;
        for nb in x.neighbors() {
            if !s.contains(&nb) {
                on_inner = true;
                outer.sites.insert(nb.clone());
                closure.sites.insert(nb);
            }
        }
        if on_inner {
            inner.sites.insert(x.clone());
        }
    }
    (outer, inner, closure)
}

/// Whether `K` and `L` are connected by a nearest-neighbor path lying
/// entirely in `allowed`. A single vertex in `K ∩ L ∩ allowed` counts.
pub fn connected(k: &SiteSet, l: &SiteSet, allowed: &SiteSet) -> bool {
    let mut queue: VecDeque<Site> = VecDeque::new();
    let mut visited: IndexSet<Site> = IndexSet::new();
    for s in k.iter() {
        if allowed.contains(s) {
            if l.contains(s) {
                return true;
            }
            if visited.insert(s.clone()) {
                queue.push_back(s.clone());
            }
        }
    }
    while let Some(x) = queue.pop_front() {
        for nb in x.neighbors() {
            if allowed.contains(&nb) && !visited.contains(&nb) {
                if l.contains(&nb) {
                    return true;
                }
                visited.insert(nb.clone());
                queue.push_back(nb);
            }
        }
    }
    false
}

/// Finite-window proxy for the disconnection event: `K` is treated as
/// disconnected from infinity when no nearest-neighbor path inside
/// `window \ occupied` joins it to the window's inner boundary.
pub fn disconnection_indicator(
    k_set: &SiteSet,
    window: &SiteSet,
    occupied: &SiteSet,
) -> Result<bool> {
    let (_, window_inner, _) = boundaries(window);
    if k_set.intersects(&window_inner) {
        return Err(Error::DegenerateGeometry(
            "body touches the window's inner boundary".into(),
        ));
    }
    let allowed = window.difference(occupied);
    Ok(!connected(k_set, &window_inner, &allowed))
}

/// `B(center, radius)` (Euclidean) or `B_inf(center, radius)` as a site set.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallNorm {
    Euclidean,
    Sup,
}

/// A discrete ball specification.
#[derive(Clone, Debug)]
pub struct BoxSpec {
    pub center: Site,
    pub radius: f64,
    pub norm: BallNorm,
}

impl BoxSpec {
    pub fn new(center: Site, radius: f64, norm: BallNorm) -> Result<BoxSpec> {
        if radius < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "ball radius must be >= 1, got {radius}"
            )));
        }
        Ok(BoxSpec {
            center,
            radius,
            norm,
        })
    }

    pub fn contains(&self, x: &Site) -> bool {
        match self.norm {
            BallNorm::Sup => {
                x.coords()
                    .iter()
                    .zip(self.center.coords())
                    .map(|(&a, &b)| (a - b).abs())
                    .max()
                    .unwrap_or(0) as f64
                    <= self.radius
            }
            BallNorm::Euclidean => (x.dist2(&self.center) as f64) <= self.radius * self.radius,
        }
    }

    pub fn sites(&self) -> SiteSet {
        let dim = self.center.dim();
        let r = self.radius.floor() as Coord;
        let mut out = SiteSet::new(dim);
        let lo: Vec<Coord> = self.center.coords().iter().map(|&c| c - r).collect();
        let hi: Vec<Coord> = self.center.coords().iter().map(|&c| c + r).collect();
        let mut cursor: SmallVec<[Coord; 4]> = lo.iter().copied().collect();
        'scan: loop {
            let site = Site(cursor.clone());
            if self.contains(&site) {
                out.sites.insert(site);
            }
            for axis in 0..dim {
                cursor[axis] += 1;
                if cursor[axis] <= hi[axis] {
                    continue 'scan;
                }
                cursor[axis] = lo[axis];
            }
            break;
        }
        out
    }
}

/// Convenience constructors used across fixtures and tests.
pub fn sup_ball(center: Site, radius: f64) -> SiteSet {
    BoxSpec::new(center, radius.max(1.0), BallNorm::Sup)
        .expect("radius validated")
        .sites()
}

pub fn euclid_ball(center: Site, radius: f64) -> SiteSet {
    BoxSpec::new(center, radius.max(1.0), BallNorm::Euclidean)
        .expect("radius validated")
        .sites()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b_inf(radius: f64) -> SiteSet {
        sup_ball(Site::origin(3), radius)
    }

    #[test]
    fn blow_up_point_is_unit_sup_ball() {
        let shape = ShapeSpec::point(vec![0.0, 0.0, 0.0]);
        let s = blow_up(&shape, 5, 3).unwrap();
        assert_eq!(s.len(), 27);
        for x in s.iter() {
            assert!(x.norm_inf() <= 1);
        }
    }

    #[test]
    fn blow_up_unit_box() {
        // [0,1]^3 scaled by 10 gives {-1..11}^3.
        let shape = ShapeSpec::cube(vec![0.5, 0.5, 0.5], 0.5).unwrap();
        let s = blow_up(&shape, 10, 3).unwrap();
        assert_eq!(s.len(), 13 * 13 * 13);
        assert!(s.contains(&Site::new([-1, -1, -1])));
        assert!(s.contains(&Site::new([11, 11, 11])));
        assert!(!s.contains(&Site::new([12, 0, 0])));
    }

    #[test]
    fn blow_up_ball_matches_brute_force_scan() {
        // Independent oracle: scan [-22,22]^3 testing d_inf(x, 20*B) <= 1
        // via a direct minimization over the ball surface parametrization is
        // replaced by the exact cube-ball intersection test, itself
        // re-derived here from first principles with interval arithmetic.
        let shape = ShapeSpec::ball(vec![0.0; 3], 1.0).unwrap();
        let s = blow_up(&shape, 20, 3).unwrap();
        let mut count = 0usize;
        for x in -22..=22i32 {
            for y in -22..=22i32 {
                for z in -22..=22i32 {
                    // d_inf(p, ball(0,20)) <= 1 iff the closest point of the
                    // cube p + [-1,1]^3 to the origin lies within radius 20.
                    let gx = (x.abs() as f64 - 1.0).max(0.0);
                    let gy = (y.abs() as f64 - 1.0).max(0.0);
                    let gz = (z.abs() as f64 - 1.0).max(0.0);
                    if (gx * gx + gy * gy + gz * gz).sqrt() <= 20.0 {
                        count += 1;
                    }
                }
            }
        }
        assert_eq!(s.len(), count);
    }

    #[test]
    fn boundaries_of_unit_sup_ball() {
        let s = b_inf(1.0);
        let (outer, inner, closure) = boundaries(&s);
        assert_eq!(outer.len(), 54);
        assert_eq!(inner.len(), 26);
        assert_eq!(closure.len(), 27 + 54);
    }

    #[test]
    fn boundaries_of_singleton() {
        let s = SiteSet::from_sites(3, [Site::origin(3)]).unwrap();
        let (outer, inner, closure) = boundaries(&s);
        assert_eq!(outer.len(), 6);
        assert_eq!(inner.len(), 1);
        assert_eq!(closure.len(), 7);
    }

    #[test]
    fn connectivity_examples() {
        let o = Site::origin(3);
        let e1 = Site::unit(3, 0, 1);
        let e2 = Site::unit(3, 0, 2);
        let k = SiteSet::from_sites(3, [o.clone()]).unwrap();
        let l = SiteSet::from_sites(3, [e2.clone()]).unwrap();

        let allowed = SiteSet::from_sites(3, [o.clone(), e1.clone(), e2.clone()]).unwrap();
        assert!(connected(&k, &l, &allowed));

        let gap = SiteSet::from_sites(3, [o.clone(), e2.clone()]).unwrap();
        assert!(!connected(&k, &l, &gap));

        let empty = SiteSet::new(3);
        assert!(!connected(&k, &l, &empty));
    }

    #[test]
    fn disconnection_cases() {
        let window = b_inf(4.0);
        let k = SiteSet::from_sites(3, [Site::origin(3)]).unwrap();

        // Vacant everywhere: connected to the boundary.
        let empty = SiteSet::new(3);
        assert!(!disconnection_indicator(&k, &window, &empty).unwrap());

        // Fully occupied: trivially disconnected.
        assert!(disconnection_indicator(&k, &window, &window).unwrap());

        // A closed sup-norm shell strictly between the body and the boundary
        // blocks all paths.
        let shell: SiteSet = SiteSet::from_sites(
            3,
            b_inf(2.0).difference(&b_inf(1.0)).iter().cloned(),
        )
        .unwrap();
        assert!(disconnection_indicator(&k, &window, &shell).unwrap());

        // Body touching the window's inner boundary is degenerate.
        let big_k = b_inf(4.0);
        assert!(disconnection_indicator(&big_k, &window, &empty).is_err());
    }

    #[test]
    fn site_set_round_trips_tuples() {
        let s = b_inf(1.0);
        let mut buf = Vec::new();
        s.write_tuples(&mut buf).unwrap();
        let back = SiteSet::read_tuples(3, &mut buf.as_slice()).unwrap();
        assert_eq!(back.len(), s.len());
        for x in s.iter() {
            assert!(back.contains(x));
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let shape = ShapeSpec::point(vec![0.0, 0.0]);
        assert!(matches!(
            blow_up(&shape, 3, 3),
            Err(Error::DimensionMismatch { .. })
        ));
        let mut s = SiteSet::new(3);
        assert!(s.insert(Site::new([0, 0])).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_set(max_abs: Coord, max_len: usize) -> impl Strategy<Value = SiteSet> {
            proptest::collection::vec(
                proptest::array::uniform3(-max_abs..=max_abs),
                0..max_len,
            )
            .prop_map(|v| {
                SiteSet::from_sites(3, v.into_iter().map(|c| Site::new(c.to_vec()))).unwrap()
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn boundary_relations(s in arb_set(4, 40)) {
                let (outer, inner, closure) = boundaries(&s);
                for x in inner.iter() {
                    prop_assert!(s.contains(x));
                }
                for x in outer.iter() {
                    prop_assert!(!s.contains(x));
                }
                for x in s.iter() {
                    prop_assert!(closure.contains(x));
                }
            }

            #[test]
            fn blow_up_monotone_in_shape(r1 in 0.3f64..1.2, dr in 0.0f64..0.8, n in 1u32..8) {
                let small = ShapeSpec::ball(vec![0.0;3], r1).unwrap();
                let big = ShapeSpec::ball(vec![0.0;3], r1 + dr).unwrap();
                let a = blow_up(&small, n, 3).unwrap();
                let b = blow_up(&big, n, 3).unwrap();
                for x in a.iter() {
                    prop_assert!(b.contains(x));
                }
            }

            #[test]
            fn connected_symmetric_and_monotone(
                k in arb_set(3, 6),
                l in arb_set(3, 6),
                allowed in arb_set(3, 60),
                extra in arb_set(3, 20),
            ) {
                let fwd = connected(&k, &l, &allowed);
                let back = connected(&l, &k, &allowed);
                prop_assert_eq!(fwd, back);
                let bigger = allowed.union(&extra).unwrap();
                if fwd {
                    prop_assert!(connected(&k, &l, &bigger));
                }
            }

            #[test]
            fn disconnection_monotone_in_occupied(occ in arb_set(3, 50), extra in arb_set(3, 30)) {
                let window = sup_ball(Site::origin(3), 4.0);
                let k = SiteSet::from_sites(3, [Site::origin(3)]).unwrap();
                let occ_more = occ.union(&extra).unwrap();
                let d1 = disconnection_indicator(&k, &window, &occ).unwrap();
                let d2 = disconnection_indicator(&k, &window, &occ_more).unwrap();
                if d1 {
                    prop_assert!(d2);
                }
            }
        }
    }
}
