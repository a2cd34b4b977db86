//! Step-level simulation of the metadata-prefetching SpMM main loop.
//!
//! Three counters advance together. `metaload_step` starts at 0,
//! `load_step` trails it by `MetaPrefetchStage` and `step` trails `load_step`
//! by `lead`. Each iteration may bulk-load metadata (every
//! `MetaPrefetchStage` steps), stitch the tile of `load_step` into buffer
//! slot `load_step % PipeStage`, and run the MMA of `step` from slot
//! `step % PipeStage`. The simulator tracks slot contents and reports every
//! data hazard it observes.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::TileConfig;
use crate::error::{Error, Result};

/// Statement order inside one loop iteration. Metadata always loads first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationOrder {
    LoadThenCompute,
    ComputeThenLoad,
}

impl FromStr for IterationOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "load_then_compute" => Ok(Self::LoadThenCompute),
            "compute_then_load" => Ok(Self::ComputeThenLoad),
            other => Err(Error::params(format!("unknown iteration order '{other}'"))),
        }
    }
}

impl fmt::Display for IterationOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::LoadThenCompute => "load-then-compute",
            Self::ComputeThenLoad => "compute-then-load",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    /// Metadata for steps `first_step..first_step + MetaPrefetchStage`.
    BulkLoadMeta { first_step: usize },
    StitchTile { step: usize, slot: usize },
    WarpMma { step: usize, slot: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IterationRecord {
    pub metaload_step: i64,
    pub load_step: i64,
    pub step: i64,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HazardKind {
    /// A slot holding a tile not yet consumed was overwritten.
    Overwrite,
    /// An MMA read a slot nothing had been stitched into.
    ReadBeforeWrite,
    /// An MMA read a slot holding another step's tile.
    StaleRead,
    /// A stitch ran before the metadata of its step was loaded.
    MetadataNotLoaded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Hazard {
    pub step: usize,
    pub slot: usize,
    pub kind: HazardKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Counters {
    pub meta_bulk_loads: usize,
    pub stitches: usize,
    pub mmas: usize,
    pub total_step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScheduleConfig {
    pub pipe_stage: usize,
    pub meta_prefetch_stage: usize,
    pub lead: usize,
    pub order: IterationOrder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScheduleTrace {
    pub config: ScheduleConfig,
    pub counters: Counters,
    pub hazards: Vec<Hazard>,
    #[serde(skip)]
    pub iterations: Vec<IterationRecord>,
}

impl ScheduleTrace {
    pub fn is_hazard_free(&self) -> bool {
        self.hazards.is_empty()
    }
}

struct Sim {
    pipe: usize,
    meta: usize,
    total: usize,
    /// Step held by each slot and whether it has been consumed.
    slots: Vec<Option<(usize, bool)>>,
    meta_loaded_until: usize,
    counters: Counters,
    hazards: Vec<Hazard>,
}

impl Sim {
    fn bulk_load(&mut self, metaload: i64, events: &mut Vec<Event>) {
        if metaload >= 0 && (metaload as usize) < self.total && (metaload as usize).is_multiple_of(self.meta) {
            let first = metaload as usize;
            self.meta_loaded_until = self.meta_loaded_until.max(first + self.meta);
            self.counters.meta_bulk_loads += 1;
            events.push(Event::BulkLoadMeta { first_step: first });
        }
    }

    fn stitch(&mut self, load: i64, events: &mut Vec<Event>) {
        if load < 0 || load as usize >= self.total {
            return;
        }
        let step = load as usize;
        let slot = step % self.pipe;
        if step >= self.meta_loaded_until {
            self.hazards.push(Hazard { step, slot, kind: HazardKind::MetadataNotLoaded });
        }
        if let Some((held, false)) = self.slots[slot] {
            self.hazards.push(Hazard { step: held, slot, kind: HazardKind::Overwrite });
        }
        self.slots[slot] = Some((step, false));
        self.counters.stitches += 1;
        events.push(Event::StitchTile { step, slot });
    }

    fn mma(&mut self, step: i64, events: &mut Vec<Event>) {
        if step < 0 || step as usize >= self.total {
            return;
        }
        let step = step as usize;
        let slot = step % self.pipe;
        match self.slots[slot] {
            None => self.hazards.push(Hazard { step, slot, kind: HazardKind::ReadBeforeWrite }),
            Some((held, _)) if held != step => {
                self.hazards.push(Hazard { step, slot, kind: HazardKind::StaleRead })
            }
            Some(_) => self.slots[slot] = Some((step, true)),
        }
        self.counters.mmas += 1;
        events.push(Event::WarpMma { step, slot });
    }
}

/// Runs the prefetch loop for `total_step` MMA steps.
///
/// `lead` is the distance between `load_step` and `step`; the loop as
/// usually written uses `cfg.pipe_stage + 1`. Metadata loads are clamped to
/// `metaload_step < total_step` and stitches to `load_step < total_step`.
pub fn pipeline_simulate(
    total_step: usize,
    cfg: &TileConfig,
    order: IterationOrder,
    lead: usize,
) -> Result<ScheduleTrace> {
    if cfg.pipe_stage < 2 {
        return Err(Error::params("pipe stage must be at least 2"));
    }
    if cfg.meta_prefetch_stage == 0 {
        return Err(Error::params("metadata prefetch stage must be at least 1"));
    }
    let mut sim = Sim {
        pipe: cfg.pipe_stage,
        meta: cfg.meta_prefetch_stage,
        total: total_step,
        slots: vec![None; cfg.pipe_stage],
        meta_loaded_until: 0,
        counters: Counters { total_step, ..Counters::default() },
        hazards: Vec::new(),
    };

    let mut metaload: i64 = 0;
    let mut load = metaload - cfg.meta_prefetch_stage as i64;
    let mut step = load - lead as i64;
    let mut iterations = Vec::new();
    while step < total_step as i64 {
        let mut events = Vec::new();
        sim.bulk_load(metaload, &mut events);
        match order {
            IterationOrder::LoadThenCompute => {
                sim.stitch(load, &mut events);
                sim.mma(step, &mut events);
            }
            IterationOrder::ComputeThenLoad => {
                sim.mma(step, &mut events);
                sim.stitch(load, &mut events);
            }
        }
        iterations.push(IterationRecord {
            metaload_step: metaload,
            load_step: load,
            step,
            events,
        });
        step += 1;
        load += 1;
        metaload += 1;
    }

    Ok(ScheduleTrace {
        config: ScheduleConfig {
            pipe_stage: cfg.pipe_stage,
            meta_prefetch_stage: cfg.meta_prefetch_stage,
            lead,
            order,
        },
        counters: sim.counters,
        hazards: sim.hazards,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(pipe: usize, meta: usize) -> TileConfig {
        TileConfig {
            pipe_stage: pipe,
            meta_prefetch_stage: meta,
            ..TileConfig::default()
        }
    }

    #[test]
    fn counters_for_eight_steps() {
        let c = cfg(2, 4);
        let trace = pipeline_simulate(8, &c, IterationOrder::ComputeThenLoad, 2).unwrap();
        assert_eq!(
            trace.counters,
            Counters { meta_bulk_loads: 2, stitches: 8, mmas: 8, total_step: 8 }
        );
        assert!(trace.is_hazard_free());
        // 8 steps + 4 metadata lead + 2 pipeline lead
        assert_eq!(trace.iterations.len(), 14);
    }

    #[test]
    fn zero_steps_do_nothing() {
        let trace = pipeline_simulate(0, &cfg(2, 4), IterationOrder::LoadThenCompute, 3).unwrap();
        assert_eq!(trace.counters, Counters::default());
        assert!(trace.hazards.is_empty());
        assert!(trace.iterations.iter().all(|i| i.events.is_empty()));
    }

    #[test]
    fn lead_past_buffer_depth_overwrites_live_slot() {
        let trace = pipeline_simulate(8, &cfg(2, 4), IterationOrder::LoadThenCompute, 3).unwrap();
        assert!(trace
            .hazards
            .iter()
            .any(|h| h.kind == HazardKind::Overwrite && h.step == 0 && h.slot == 0));
        assert_eq!(trace.counters.stitches, 8);
        assert_eq!(trace.counters.mmas, 8);
    }

    #[test]
    fn load_first_with_full_depth_lead_is_unsafe() {
        let trace = pipeline_simulate(8, &cfg(2, 4), IterationOrder::LoadThenCompute, 2).unwrap();
        assert!(!trace.is_hazard_free());
        let safe = pipeline_simulate(8, &cfg(2, 4), IterationOrder::LoadThenCompute, 1).unwrap();
        assert!(safe.is_hazard_free());
    }

    #[test]
    fn metadata_arrives_before_its_stitch() {
        for meta in 1..6 {
            let trace = pipeline_simulate(13, &cfg(3, meta), IterationOrder::ComputeThenLoad, 3).unwrap();
            assert!(trace.is_hazard_free(), "meta={meta}");
            assert_eq!(trace.counters.meta_bulk_loads, 13usize.div_ceil(meta));
        }
    }

    #[test]
    fn every_mma_reads_its_own_tile() {
        let trace = pipeline_simulate(9, &cfg(4, 2), IterationOrder::ComputeThenLoad, 4).unwrap();
        let mut slots = [None; 4];
        for it in &trace.iterations {
            for e in &it.events {
                match *e {
                    Event::StitchTile { step, slot } => slots[slot] = Some(step),
                    Event::WarpMma { step, slot } => assert_eq!(slots[slot], Some(step)),
                    Event::BulkLoadMeta { .. } => {}
                }
            }
        }
    }

    #[test]
    fn rejects_shallow_pipeline() {
        assert!(pipeline_simulate(4, &cfg(1, 4), IterationOrder::LoadThenCompute, 1).is_err());
        assert!(pipeline_simulate(4, &cfg(2, 0), IterationOrder::LoadThenCompute, 1).is_err());
        assert!("sideways".parse::<IterationOrder>().is_err());
        assert_eq!(
            "compute-then-load".parse::<IterationOrder>().unwrap(),
            IterationOrder::ComputeThenLoad
        );
    }
}
