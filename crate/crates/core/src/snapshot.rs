//! Snapshots of the micro-cluster store and time-slot recovery.
//!
//! A snapshot is taken between windows. The state of a time slot is
//! recovered from two snapshots by undoing, cluster by cluster, the
//! allocations recorded before the lower snapshot: since a centroid is the
//! mean of its `n` allocations, `(n_u * c_u - n_l * c_l) / (n_u - n_l)` is the
//! mean of the allocations made in between.
//!
//! On disk a snapshot is line-oriented text:
//!
//! ```text
//! FBPSNAP v1 taken_at=<int> w=<int> k=<int>
//! cluster id=<int> n=<int> tl=<int>
//! <envelope_min values>
//! <box_lower values>
//! <median values>
//! <box_upper values>
//! <envelope_max values>
//! ...
//! ```
//!
//! Values are space separated, written with 17 significant digits so that
//! every `f64` reads back bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::domain::{Curve, TimeGrid};
use crate::error::{Error, Result};
use crate::fboxplot::BoxplotCurves;
use crate::stream::{read_event_log, write_event_log, MicroClusterStore, StoreEvent};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "FBPSNAP";
const EVENTS_FILE: &str = "events.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterRecord {
    pub id: u64,
    pub n_allocated: u64,
    pub last_update: u64,
    pub centroid: BoxplotCurves,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// Number of windows processed when the snapshot was taken.
    pub taken_at: u64,
    pub grid: TimeGrid,
    pub records: Vec<ClusterRecord>,
    pub format_version: u32,
}

/// Copies the state of every live cluster.
pub fn take_snapshot(store: &MicroClusterStore, t_now: u64) -> Snapshot {
    Snapshot {
        taken_at: t_now,
        grid: store.grid(),
        records: store
            .clusters()
            .iter()
            .map(|c| ClusterRecord {
                id: c.id,
                n_allocated: c.n_allocated,
                last_update: c.last_update,
                centroid: c.centroid.curves.clone(),
            })
            .collect(),
        format_version: FORMAT_VERSION,
    }
}

fn push_row(out: &mut String, curve: &Curve) {
    for (i, v) in curve.values().iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{v:.16e}").expect("writing to a String");
    }
    out.push('\n');
}

impl Snapshot {
    pub fn get(&self, id: u64) -> Option<&ClusterRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{MAGIC} v{} taken_at={} w={} k={}",
            self.format_version,
            self.taken_at,
            self.grid.len(),
            self.records.len()
        )
        .expect("writing to a String");
        for r in &self.records {
            writeln!(out, "cluster id={} n={} tl={}", r.id, r.n_allocated, r.last_update)
                .expect("writing to a String");
            for c in r.centroid.components() {
                push_row(&mut out, c);
            }
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let mut next_line = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, line)) => Ok((i + 1, line?)),
                None => Err(Error::Data(format!("snapshot ended before {what}"))),
            }
        };

        let (lineno, header) = next_line("the header")?;
        let tokens: Vec<&str> = header.split(' ').collect();
        if tokens.len() != 5 || tokens[0] != MAGIC {
            return Err(Error::Data(format!("line {lineno}: not a snapshot header: '{header}'")));
        }
        let format_version: u32 = tokens[1]
            .strip_prefix('v')
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Data(format!("line {lineno}: bad version '{}'", tokens[1])))?;
        if format_version != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "line {lineno}: unsupported snapshot version {format_version}"
            )));
        }
        let taken_at = keyed(tokens[2], "taken_at", lineno)?;
        let w = keyed(tokens[3], "w", lineno)? as usize;
        let k = keyed(tokens[4], "k", lineno)? as usize;
        let grid = TimeGrid::new(w).map_err(|_| Error::Data(format!("line {lineno}: bad w={w}")))?;

        let mut records = Vec::with_capacity(k);
        for _ in 0..k {
            let (lineno, line) = next_line("a cluster header")?;
            let tokens: Vec<&str> = line.split(' ').collect();
            if tokens.len() != 4 || tokens[0] != "cluster" {
                return Err(Error::Data(format!("line {lineno}: expected a cluster header, got '{line}'")));
            }
            let id = keyed(tokens[1], "id", lineno)?;
            let n_allocated = keyed(tokens[2], "n", lineno)?;
            let last_update = keyed(tokens[3], "tl", lineno)?;
            let mut components = Vec::with_capacity(5);
            for _ in 0..5 {
                let (lineno, line) = next_line("a component row")?;
                let values = line
                    .split(' ')
                    .map(|v| {
                        v.parse::<f64>()
                            .map_err(|_| Error::Data(format!("line {lineno}: bad value '{v}'")))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                components.push(
                    Curve::new(grid, values).map_err(|e| Error::Data(format!("line {lineno}: {e}")))?,
                );
            }
            let components: [Curve; 5] = components.try_into().expect("five components");
            records.push(ClusterRecord {
                id,
                n_allocated,
                last_update,
                centroid: BoxplotCurves::new(components)?,
            });
        }
        let mut ids: Vec<u64> = records.iter().map(|r| r.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::Data("snapshot repeats a cluster id".into()));
        }
        Ok(Self {
            taken_at,
            grid,
            records,
            format_version,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::read_from(text.as_bytes())
    }
}

fn keyed(token: &str, key: &str, lineno: usize) -> Result<u64> {
    token
        .strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Data(format!("line {lineno}: expected {key}=<int>, got '{token}'")))
}

/// A micro-cluster's activity inside a time slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotEntry {
    pub id: u64,
    pub centroid: BoxplotCurves,
    pub weight: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotSummary {
    pub slot: (u64, u64),
    pub lower_at: u64,
    pub upper_at: u64,
    pub entries: Vec<SlotEntry>,
}

impl SlotSummary {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_weight(&self) -> u64 {
        self.entries.iter().map(|e| e.weight).sum()
    }
}

/// Snapshots closest to each end of `[t_lo, t_hi]`; ties go to the earlier
/// snapshot.
pub fn select_snapshots(catalog: &[Snapshot], t_lo: u64, t_hi: u64) -> Result<(&Snapshot, &Snapshot)> {
    if catalog.is_empty() {
        return Err(Error::Query("the snapshot catalog is empty".into()));
    }
    if t_lo > t_hi {
        return Err(Error::Query(format!("slot [{t_lo}, {t_hi}] is reversed")));
    }
    let closest = |t: u64| {
        catalog
            .iter()
            .min_by_key(|s| (s.taken_at.abs_diff(t), s.taken_at))
            .expect("catalog is nonempty")
    };
    let lower = closest(t_lo);
    let upper = closest(t_hi);
    if lower.taken_at >= upper.taken_at {
        return Err(Error::Query(format!(
            "slot [{t_lo}, {t_hi}] maps onto snapshots at {} and {}, which bound no activity",
            lower.taken_at, upper.taken_at
        )));
    }
    Ok((lower, upper))
}

/// Recovers the per-cluster state of the slot between two snapshots.
pub fn recover_slot(lower: &Snapshot, upper: &Snapshot) -> Result<SlotSummary> {
    if lower.taken_at >= upper.taken_at {
        return Err(Error::Query(format!(
            "lower snapshot ({}) must precede upper snapshot ({})",
            lower.taken_at, upper.taken_at
        )));
    }
    if lower.grid != upper.grid {
        return Err(Error::Inconsistency(format!(
            "snapshots use windows of {} and {} samples",
            lower.grid.len(),
            upper.grid.len()
        )));
    }
    let mut entries = Vec::new();
    for u in &upper.records {
        let Some(l) = lower.get(u.id) else {
            entries.push(SlotEntry {
                id: u.id,
                centroid: u.centroid.clone(),
                weight: u.n_allocated,
            });
            continue;
        };
        if u.n_allocated < l.n_allocated {
            return Err(Error::Inconsistency(format!(
                "cluster {} shrank from {} to {} allocations between snapshots",
                u.id, l.n_allocated, u.n_allocated
            )));
        }
        if u.n_allocated == l.n_allocated {
            continue;
        }
        let (nu, nl) = (u.n_allocated as f64, l.n_allocated as f64);
        let weight = u.n_allocated - l.n_allocated;
        let dn = weight as f64;
        let diff = |cu: &Curve, cl: &Curve| -> Result<Curve> {
            let values = cu
                .values()
                .iter()
                .zip(cl.values())
                .map(|(a, b)| (nu * a - nl * b) / dn)
                .collect();
            Curve::new(cu.grid(), values)
        };
        let comps: Vec<Curve> = u
            .centroid
            .components()
            .iter()
            .zip(l.centroid.components())
            .map(|(cu, cl)| diff(cu, cl))
            .collect::<Result<_>>()?;
        let comps: [Curve; 5] = comps.try_into().expect("five components");
        entries.push(SlotEntry {
            id: u.id,
            centroid: BoxplotCurves::new(comps)?,
            weight,
        });
    }
    entries.sort_by_key(|e| e.id);
    Ok(SlotSummary {
        slot: (lower.taken_at, upper.taken_at),
        lower_at: lower.taken_at,
        upper_at: upper.taken_at,
        entries,
    })
}

/// An ordered collection of snapshots plus the store's structural events.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SnapshotCatalog {
    snapshots: Vec<Snapshot>,
    events: Vec<StoreEvent>,
}

impl SnapshotCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn events(&self) -> &[StoreEvent] {
        &self.events
    }

    pub fn set_events(&mut self, events: Vec<StoreEvent>) {
        self.events = events;
    }

    pub fn push(&mut self, snapshot: Snapshot) -> Result<()> {
        if let Some(last) = self.snapshots.last() {
            if snapshot.taken_at < last.taken_at {
                return Err(Error::Argument(format!(
                    "snapshot at {} arrives after one at {}",
                    snapshot.taken_at, last.taken_at
                )));
            }
            if snapshot.grid != last.grid {
                return Err(Error::Argument("snapshots must share one window size".into()));
            }
        }
        self.snapshots.push(snapshot);
        Ok(())
    }

    pub fn select(&self, t_lo: u64, t_hi: u64) -> Result<(&Snapshot, &Snapshot)> {
        select_snapshots(&self.snapshots, t_lo, t_hi)
    }

    /// Selects the bounding snapshots and recovers the slot, refusing slots
    /// in which a cluster that predates the slot took part in a merge.
    pub fn recover(&self, t_lo: u64, t_hi: u64) -> Result<SlotSummary> {
        let (lower, upper) = self.select(t_lo, t_hi)?;
        for e in &self.events {
            if let StoreEvent::Merged { at, kept, absorbed, .. } = *e {
                let inside = lower.taken_at <= at && at < upper.taken_at;
                if inside && (lower.get(kept).is_some() || lower.get(absorbed).is_some()) {
                    return Err(Error::Inconsistency(format!(
                        "clusters {kept} and {absorbed} merged at window {at}, inside the slot \
                         [{}, {}]; choose a slot that starts after the merge",
                        lower.taken_at, upper.taken_at
                    )));
                }
            }
        }
        let mut summary = recover_slot(lower, upper)?;
        summary.slot = (t_lo, t_hi);
        Ok(summary)
    }

    pub fn snapshot_path(dir: &Path, taken_at: u64) -> PathBuf {
        dir.join(format!("snapshot_{taken_at:010}.fbpsnap"))
    }

    /// Writes every snapshot and the event log into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for s in &self.snapshots {
            fs::write(Self::snapshot_path(dir, s.taken_at), s.to_text())?;
        }
        let mut events = Vec::new();
        write_event_log(&mut events, &self.events)?;
        fs::write(dir.join(EVENTS_FILE), events)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::Query(format!("no snapshot directory at {}", dir.display())));
        }
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "fbpsnap"))
            .collect();
        paths.sort();
        let mut snapshots = Vec::with_capacity(paths.len());
        for p in &paths {
            let file = fs::File::open(p)?;
            let snap = Snapshot::read_from(BufReader::new(file))
                .map_err(|e| Error::Data(format!("{}: {e}", p.display())))?;
            snapshots.push(snap);
        }
        snapshots.sort_by_key(|s| s.taken_at);
        let mut catalog = Self::new();
        for s in snapshots {
            catalog.push(s)?;
        }
        let events_path = dir.join(EVENTS_FILE);
        if events_path.exists() {
            catalog.events = read_event_log(BufReader::new(fs::File::open(events_path)?))?;
        }
        Ok(catalog)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Window;
    use crate::fboxplot::FunctionalBoxplot;
    use crate::stream::StoreConfig;
    use proptest::prelude::*;

    fn grid() -> TimeGrid {
        TimeGrid::new(4).unwrap()
    }

    fn const_curves(v: f64) -> BoxplotCurves {
        BoxplotCurves::degenerate(Curve::constant(grid(), v).unwrap())
    }

    fn record(id: u64, n: u64, v: f64) -> ClusterRecord {
        ClusterRecord {
            id,
            n_allocated: n,
            last_update: 0,
            centroid: const_curves(v),
        }
    }

    fn snap(taken_at: u64, records: Vec<ClusterRecord>) -> Snapshot {
        Snapshot {
            taken_at,
            grid: grid(),
            records,
            format_version: FORMAT_VERSION,
        }
    }

    fn level(c: &BoxplotCurves) -> f64 {
        c.median.values()[0]
    }

    #[test]
    fn empty_store_snapshot() {
        let store = MicroClusterStore::new(grid(), StoreConfig::default()).unwrap();
        let s = take_snapshot(&store, 0);
        assert!(s.records.is_empty());
        assert_eq!(s.to_text(), "FBPSNAP v1 taken_at=0 w=4 k=0\n");
        assert_eq!(Snapshot::parse(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn snapshot_copies_the_store() {
        let mut store = MicroClusterStore::new(grid(), StoreConfig::default()).unwrap();
        for (t, v) in [0.0, 10.0, 20.0].into_iter().enumerate() {
            let fbp = FunctionalBoxplot {
                curves: const_curves(v),
                window: Window::new(t as u64, 4),
                n_source_curves: 2,
            };
            store.allocate(fbp, t as u64).unwrap();
        }
        let s = take_snapshot(&store, 3);
        assert_eq!(s.records.len(), 3);
        for (r, c) in s.records.iter().zip(store.clusters()) {
            assert_eq!((r.id, r.n_allocated, r.last_update), (c.id, c.n_allocated, c.last_update));
            assert_eq!(r.centroid, c.centroid.curves);
        }
    }

    #[test]
    fn text_layout() {
        let s = snap(7, vec![record(3, 2, 1.5)]);
        let text = s.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0], "FBPSNAP v1 taken_at=7 w=4 k=1");
        assert_eq!(lines[1], "cluster id=3 n=2 tl=0");
        assert_eq!(
            lines[2],
            "1.5000000000000000e0 1.5000000000000000e0 1.5000000000000000e0 1.5000000000000000e0"
        );
    }

    #[test]
    fn malformed_snapshots() {
        for bad in [
            "",
            "FBPSNAP v2 taken_at=0 w=4 k=0\n",
            "FBPSNAP v1 taken_at=x w=4 k=0\n",
            "FBPSNAP v1 taken_at=0 w=4 k=1\n",
            "FBPSNAP v1 taken_at=0 w=4 k=1\ncluster id=1 n=1 tl=0\n1 2 3 4\n",
            "FBPSNAP v1 taken_at=0 w=2 k=1\ncluster id=1 n=1 tl=0\n1 2\n1 2\n1 x\n1 2\n1 2\n",
            "FBPSNAP v1 taken_at=0 w=2 k=1\ncluster id=1 n=1 tl=0\n1 2\n1 2\n1 2 3\n1 2\n1 2\n",
        ] {
            assert!(matches!(Snapshot::parse(bad), Err(Error::Data(_))), "{bad:?}");
        }
    }

    #[test]
    fn selection_examples() {
        let catalog = vec![snap(0, vec![]), snap(100, vec![]), snap(200, vec![])];
        let pick = |a, b| {
            let (l, u) = select_snapshots(&catalog, a, b).unwrap();
            (l.taken_at, u.taken_at)
        };
        assert_eq!(pick(90, 210), (100, 200));
        assert_eq!(pick(50, 150), (0, 100));
        assert_eq!(pick(0, 99), (0, 100));
        assert!(matches!(select_snapshots(&catalog, 90, 110), Err(Error::Query(_))));
        assert!(matches!(select_snapshots(&[], 0, 1), Err(Error::Query(_))));
        assert!(matches!(select_snapshots(&catalog, 10, 5), Err(Error::Query(_))));
    }

    #[test]
    fn weighted_difference() {
        let lower = snap(10, vec![record(1, 2, 1.0)]);
        let upper = snap(20, vec![record(1, 4, 2.0)]);
        let slot = recover_slot(&lower, &upper).unwrap();
        assert_eq!(slot.entries.len(), 1);
        assert_eq!(slot.entries[0].weight, 2);
        assert_eq!(level(&slot.entries[0].centroid), 3.0);
    }

    #[test]
    fn idle_and_new_clusters() {
        let lower = snap(10, vec![record(1, 2, 1.0), record(2, 3, 5.0)]);
        assert!(recover_slot(&lower, &snap(20, lower.records.clone())).unwrap().is_empty());
        let upper = snap(20, vec![record(1, 2, 1.0), record(5, 5, 8.0)]);
        let slot = recover_slot(&lower, &upper).unwrap();
        assert_eq!(slot.entries.len(), 1);
        assert_eq!(slot.entries[0].id, 5);
        assert_eq!(slot.entries[0].weight, 5);
        assert_eq!(slot.entries[0].centroid, const_curves(8.0));
    }

    #[test]
    fn shrinking_cluster_is_inconsistent() {
        let lower = snap(10, vec![record(1, 4, 1.0)]);
        let upper = snap(20, vec![record(1, 3, 1.0)]);
        assert!(matches!(recover_slot(&lower, &upper), Err(Error::Inconsistency(_))));
    }

    #[test]
    fn catalog_refuses_slots_spanning_a_merge() {
        let mut catalog = SnapshotCatalog::new();
        catalog.push(snap(10, vec![record(1, 2, 1.0), record(2, 2, 1.5)])).unwrap();
        catalog.push(snap(20, vec![record(1, 6, 1.2)])).unwrap();
        catalog.set_events(vec![StoreEvent::Merged {
            at: 15,
            kept: 1,
            absorbed: 2,
            n_allocated: 6,
        }]);
        assert!(matches!(catalog.recover(10, 20), Err(Error::Inconsistency(_))));
        catalog.set_events(vec![]);
        assert_eq!(catalog.recover(10, 20).unwrap().total_weight(), 4);
        assert!(catalog.push(snap(5, vec![])).is_err());
    }

    #[test]
    fn catalog_directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut catalog = SnapshotCatalog::new();
        catalog.push(snap(0, vec![])).unwrap();
        catalog.push(snap(10, vec![record(1, 2, -0.0), record(4, 1, 1e-300)])).unwrap();
        catalog.set_events(vec![StoreEvent::Created { at: 3, id: 1 }]);
        catalog.save(dir.path()).unwrap();
        assert_eq!(SnapshotCatalog::load(dir.path()).unwrap(), catalog);
        assert!(matches!(
            SnapshotCatalog::load(&dir.path().join("missing")),
            Err(Error::Query(_))
        ));
    }

    proptest! {
        #[test]
        fn serialization_is_bit_exact(
            rows in prop::collection::vec(prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL, 5 * 3), 0..4),
            taken_at in 0u64..1_000_000,
        ) {
            let g = TimeGrid::new(3).unwrap();
            let records: Vec<ClusterRecord> = rows
                .iter()
                .enumerate()
                .map(|(i, vals)| {
                    let comps: Vec<Curve> = vals.chunks(3).map(|c| Curve::new(g, c.to_vec()).unwrap()).collect();
                    ClusterRecord {
                        id: 2 * i as u64 + 1,
                        n_allocated: i as u64 + 1,
                        last_update: taken_at / 2,
                        centroid: BoxplotCurves::new(comps.try_into().unwrap()).unwrap(),
                    }
                })
                .collect();
            let s = Snapshot { taken_at, grid: g, records, format_version: FORMAT_VERSION };
            let back = Snapshot::parse(&s.to_text()).unwrap();
            for (a, b) in back.records.iter().zip(&s.records) {
                for (x, y) in a.centroid.components().iter().zip(b.centroid.components()) {
                    let xb: Vec<u64> = x.values().iter().map(|v| v.to_bits()).collect();
                    let yb: Vec<u64> = y.values().iter().map(|v| v.to_bits()).collect();
                    prop_assert_eq!(xb, yb);
                }
            }
            prop_assert_eq!(back, s);
        }
    }
}
