use std::fmt;
use std::io::{BufRead, Write};

use crate::domain::TimeGrid;
use crate::error::{Error, Result};
use crate::fboxplot::{mean_fbp, FunctionalBoxplot};

use super::distance::fbp_distance;

/// On-line synopsis of a group of similar window boxplots.
#[derive(Debug, Clone, PartialEq)]
pub struct FbpMicroCluster {
    pub id: u64,
    /// Running mean of every boxplot allocated to the cluster.
    pub centroid: FunctionalBoxplot,
    pub n_allocated: u64,
    /// Window index of the last allocation or merge.
    pub last_update: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreEvent {
    Created { at: u64, id: u64 },
    Merged { at: u64, kept: u64, absorbed: u64, n_allocated: u64 },
    Discarded { at: u64, id: u64, n_allocated: u64 },
}

impl StoreEvent {
    pub fn at(&self) -> u64 {
        match *self {
            StoreEvent::Created { at, .. }
            | StoreEvent::Merged { at, .. }
            | StoreEvent::Discarded { at, .. } => at,
        }
    }

    fn csv_row(&self) -> String {
        match *self {
            StoreEvent::Created { at, id } => format!("{at},create,{id},,1"),
            StoreEvent::Merged {
                at,
                kept,
                absorbed,
                n_allocated,
            } => format!("{at},merge,{kept},{absorbed},{n_allocated}"),
            StoreEvent::Discarded { at, id, n_allocated } => {
                format!("{at},discard,{id},,{n_allocated}")
            }
        }
    }
}

impl fmt::Display for StoreEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            StoreEvent::Created { at, id } => write!(f, "t={at} create #{id}"),
            StoreEvent::Merged {
                at, kept, absorbed, ..
            } => write!(f, "t={at} merge #{absorbed} into #{kept}"),
            StoreEvent::Discarded { at, id, .. } => write!(f, "t={at} discard #{id}"),
        }
    }
}

pub const EVENT_LOG_HEADER: &str = "timestamp,event,cluster_id,other_id,n";

/// Writes the structural event log as comma-separated text.
pub fn write_event_log<W: Write>(mut out: W, events: &[StoreEvent]) -> Result<()> {
    writeln!(out, "{EVENT_LOG_HEADER}")?;
    for e in events {
        writeln!(out, "{}", e.csv_row())?;
    }
    Ok(())
}

pub fn read_event_log<R: BufRead>(input: R) -> Result<Vec<StoreEvent>> {
    let mut events = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Data(format!("event log line {}: cannot parse '{line}'", lineno + 1));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<u64>().map_err(|_| bad());
        let at = num(fields[0])?;
        let id = num(fields[2])?;
        let n = num(fields[4])?;
        events.push(match fields[1] {
            "create" => StoreEvent::Created { at, id },
            "merge" => StoreEvent::Merged {
                at,
                kept: id,
                absorbed: num(fields[3])?,
                n_allocated: n,
            },
            "discard" => StoreEvent::Discarded {
                at,
                id,
                n_allocated: n,
            },
            _ => return Err(bad()),
        });
    }
    Ok(events)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocationOutcome {
    Assigned(u64),
    Created(u64),
    CreatedAfterEvict { id: u64, evicted: StoreEvent },
}

impl AllocationOutcome {
    pub fn cluster_id(&self) -> u64 {
        match *self {
            AllocationOutcome::Assigned(id)
            | AllocationOutcome::Created(id)
            | AllocationOutcome::CreatedAfterEvict { id, .. } => id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreConfig {
    /// Upper bound on the number of live micro-clusters.
    pub k_max: usize,
    /// Age in windows beyond which a cluster counts as stale.
    pub t_star: u64,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self {
            k_max: 50,
            t_star: 50,
        }
    }
}

/// The set of live micro-clusters.
///
/// Clusters are kept in ascending id order together with the full matrix of
/// pairwise centroid distances, so the allocation threshold (the minimum
/// pairwise centroid distance) is always current.
#[derive(Debug, Clone)]
pub struct MicroClusterStore {
    cfg: StoreConfig,
    grid: TimeGrid,
    clusters: Vec<FbpMicroCluster>,
    distances: Vec<Vec<f64>>,
    threshold: Option<f64>,
    next_id: u64,
    last_time: Option<u64>,
    events: Vec<StoreEvent>,
}

impl MicroClusterStore {
    pub fn new(grid: TimeGrid, cfg: StoreConfig) -> Result<Self> {
        if cfg.k_max < 2 {
            return Err(Error::Config(format!(
                "k_max must be at least 2, got {}",
                cfg.k_max
            )));
        }
        if cfg.t_star == 0 {
            return Err(Error::Config("t_star must be positive".into()));
        }
        Ok(Self {
            cfg,
            grid,
            clusters: Vec::new(),
            distances: Vec::new(),
            threshold: None,
            next_id: 1,
            last_time: None,
            events: Vec::new(),
        })
    }

    pub fn config(&self) -> StoreConfig {
        self.cfg
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn clusters(&self) -> &[FbpMicroCluster] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Current allocation threshold; `None` while fewer than two clusters exist.
    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    pub fn events(&self) -> &[StoreEvent] {
        &self.events
    }

    pub fn get(&self, id: u64) -> Option<&FbpMicroCluster> {
        self.position(id).map(|p| &self.clusters[p])
    }

    /// Total weight removed by discards.
    pub fn discarded_weight(&self) -> u64 {
        self.events
            .iter()
            .map(|e| match e {
                StoreEvent::Discarded { n_allocated, .. } => *n_allocated,
                _ => 0,
            })
            .sum()
    }

    pub fn allocated_weight(&self) -> u64 {
        self.clusters.iter().map(|c| c.n_allocated).sum()
    }

    fn position(&self, id: u64) -> Option<usize> {
        self.clusters.binary_search_by_key(&id, |c| c.id).ok()
    }

    fn refresh_threshold(&mut self) {
        let k = self.clusters.len();
        self.threshold = (k >= 2).then(|| {
            (0..k)
                .flat_map(|i| ((i + 1)..k).map(move |j| (i, j)))
                .map(|(i, j)| self.distances[i][j])
                .fold(f64::INFINITY, f64::min)
        });
    }

    fn recompute_row(&mut self, pos: usize) -> Result<()> {
        for j in 0..self.clusters.len() {
            let d = if j == pos {
                0.0
            } else {
                fbp_distance(&self.clusters[pos].centroid.curves, &self.clusters[j].centroid.curves)?
            };
            self.distances[pos][j] = d;
            self.distances[j][pos] = d;
        }
        Ok(())
    }

    fn remove_at(&mut self, pos: usize) -> FbpMicroCluster {
        self.distances.remove(pos);
        for row in &mut self.distances {
            row.remove(pos);
        }
        self.clusters.remove(pos)
    }

    fn push(&mut self, cluster: FbpMicroCluster, row: Vec<f64>) {
        debug_assert!(self.clusters.last().is_none_or(|c| c.id < cluster.id));
        for (r, d) in self.distances.iter_mut().zip(&row) {
            r.push(*d);
        }
        let mut own = row;
        own.push(0.0);
        self.distances.push(own);
        self.clusters.push(cluster);
    }

    /// Allocates the boxplot of window `t_now`.
    ///
    /// The boxplot joins the nearest centroid when that distance is below the
    /// threshold; otherwise it starts a new cluster, first discarding a stale
    /// cluster or merging the closest pair when the store is full.
    pub fn allocate(&mut self, fbp: FunctionalBoxplot, t_now: u64) -> Result<AllocationOutcome> {
        if let Some(last) = self.last_time {
            if t_now <= last {
                return Err(Error::Argument(format!(
                    "timestamps must increase: got {t_now} after {last}"
                )));
            }
        }
        if fbp.grid() != self.grid {
            return Err(Error::Data(format!(
                "boxplot has {} grid points, store holds {}",
                fbp.grid().len(),
                self.grid.len()
            )));
        }
        if let Some(pos) = fbp.curves.ordering_violation() {
            return Err(Error::Data(format!(
                "boxplot components are out of order at grid point {pos}"
            )));
        }
        self.last_time = Some(t_now);

        let row: Vec<f64> = self
            .clusters
            .iter()
            .map(|c| fbp_distance(&fbp.curves, &c.centroid.curves))
            .collect::<Result<_>>()?;

        if let Some(th) = self.threshold {
            // first minimum wins, i.e. the lowest id among ties
            let (pos, &d) = row
                .iter()
                .enumerate()
                .fold(None, |best: Option<(usize, &f64)>, (i, d)| match best {
                    Some((_, bd)) if *bd <= *d => best,
                    _ => Some((i, d)),
                })
                .expect("threshold implies at least two clusters");
            if d < th {
                let cluster = &mut self.clusters[pos];
                let n = cluster.n_allocated as f64;
                cluster.centroid = mean_fbp(&[cluster.centroid.clone(), fbp], &[n, 1.0])?;
                cluster.n_allocated += 1;
                cluster.last_update = t_now;
                let id = cluster.id;
                self.recompute_row(pos)?;
                self.refresh_threshold();
                return Ok(AllocationOutcome::Assigned(id));
            }
        }

        let evicted = if self.clusters.len() >= self.cfg.k_max {
            Some(self.evict_or_merge(t_now)?)
        } else {
            None
        };
        let row: Vec<f64> = if evicted.is_some() {
            self.clusters
                .iter()
                .map(|c| fbp_distance(&fbp.curves, &c.centroid.curves))
                .collect::<Result<_>>()?
        } else {
            row
        };
        let id = self.next_id;
        self.next_id += 1;
        self.push(
            FbpMicroCluster {
                id,
                centroid: fbp,
                n_allocated: 1,
                last_update: t_now,
            },
            row,
        );
        self.events.push(StoreEvent::Created { at: t_now, id });
        self.refresh_threshold();
        Ok(match evicted {
            Some(evicted) => AllocationOutcome::CreatedAfterEvict { id, evicted },
            None => AllocationOutcome::Created(id),
        })
    }

    /// Frees one slot: discards the stalest cluster older than `t_star`, or
    /// merges the two closest clusters when none is stale.
    pub fn evict_or_merge(&mut self, t_now: u64) -> Result<StoreEvent> {
        let stale = self
            .clusters
            .iter()
            .enumerate()
            .filter(|(_, c)| t_now.saturating_sub(c.last_update) > self.cfg.t_star)
            // strict comparison keeps the lowest id among equally old clusters
            .fold(None, |best: Option<(usize, u64)>, (i, c)| {
                let age = t_now - c.last_update;
                match best {
                    Some((_, a)) if a >= age => best,
                    _ => Some((i, age)),
                }
            });
        let event = if let Some((pos, _)) = stale {
            let gone = self.remove_at(pos);
            StoreEvent::Discarded {
                at: t_now,
                id: gone.id,
                n_allocated: gone.n_allocated,
            }
        } else {
            let k = self.clusters.len();
            if k < 2 {
                return Err(Error::Argument(
                    "nothing to merge and no stale cluster to discard".into(),
                ));
            }
            let mut best = (0, 1, f64::INFINITY);
            for i in 0..k {
                for j in (i + 1)..k {
                    if self.distances[i][j] < best.2 {
                        best = (i, j, self.distances[i][j]);
                    }
                }
            }
            let (i, j, _) = best;
            let absorbed = self.remove_at(j);
            let kept = &mut self.clusters[i];
            let later = if absorbed.last_update > kept.last_update {
                absorbed.centroid.window
            } else {
                kept.centroid.window
            };
            let mut merged = mean_fbp(
                &[kept.centroid.clone(), absorbed.centroid],
                &[kept.n_allocated as f64, absorbed.n_allocated as f64],
            )?;
            merged.window = later;
            kept.centroid = merged;
            kept.n_allocated += absorbed.n_allocated;
            kept.last_update = kept.last_update.max(absorbed.last_update);
            let event = StoreEvent::Merged {
                at: t_now,
                kept: kept.id,
                absorbed: absorbed.id,
                n_allocated: kept.n_allocated,
            };
            self.recompute_row(i)?;
            event
        };
        self.events.push(event);
        self.refresh_threshold();
        Ok(event)
    }
}

/// Minimum pairwise centroid distance; `None` for fewer than two clusters.
pub fn compute_threshold(clusters: &[FbpMicroCluster]) -> Result<Option<f64>> {
    if clusters.len() < 2 {
        return Ok(None);
    }
    let mut best = f64::INFINITY;
    for (i, a) in clusters.iter().enumerate() {
        for b in &clusters[i + 1..] {
            best = best.min(fbp_distance(&a.centroid.curves, &b.centroid.curves)?);
        }
    }
    Ok(Some(best))
}
