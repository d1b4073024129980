//! Line-delimited scenario log.
//!
//! Every line is a whitespace-separated list of `field:value` tokens:
//!
//! ```text
//! scenario_log:1 workspace_side:10000 epochs:360 epoch_dt:5 initial_cars:50,500 ...
//! goal:8700.5,812.25 initial_count:143
//! epoch:0 time:0 vehicles:143
//! vehicle:0 pos:123.5,456 anchor:123.5,456,0 wp:0,123.5,456,7.25 wp:1,...
//! ```
//!
//! The header carries the full `ScenarioConfig`. Each `epoch` line is
//! followed by exactly `vehicles` vehicle lines. A waypoint token is
//! `wp:seq,x,y,eta`. Floats are written in shortest round-trip form, so
//! parsing a log reproduces the recorded state bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use sha2::{Digest, Sha256};

use super::{sync_rider, DreamrState, ScenarioConfig, ScenarioSource, VehicleId, VehicleRoute, Waypoint};
use crate::error::{Error, Result};

pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: u32,
    pub time: f64,
    pub routes: BTreeMap<VehicleId, VehicleRoute>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioLog {
    pub config: ScenarioConfig,
    pub goal: [f64; 2],
    pub initial_count: u32,
    pub epochs: Vec<EpochRecord>,
}

pub fn header_line(config: &ScenarioConfig) -> String {
    let c = config;
    format!(
        "scenario_log:{LOG_VERSION} workspace_side:{} epochs:{} epoch_dt:{} initial_cars:{},{} \
         max_cars_multiplier:{} waypoints_per_route:{},{} route_duration:{},{} \
         min_endpoint_separation:{} max_car_speed:{} perturb_probability:{} perturb_bound:{} \
         goal_corner_offset:{},{} seed:{}",
        c.workspace_side,
        c.epochs,
        c.epoch_dt,
        c.initial_cars[0],
        c.initial_cars[1],
        c.max_cars_multiplier,
        c.waypoints_per_route[0],
        c.waypoints_per_route[1],
        c.route_duration[0],
        c.route_duration[1],
        c.min_endpoint_separation,
        c.max_car_speed,
        c.perturb_probability,
        c.perturb_bound,
        c.goal_corner_offset[0],
        c.goal_corner_offset[1],
        c.seed,
    )
}

pub fn start_line(goal: [f64; 2], initial_count: u32) -> String {
    format!("goal:{},{} initial_count:{}", goal[0], goal[1], initial_count)
}

/// Appends the epoch line and its vehicle lines to `out`.
pub fn write_epoch(out: &mut String, epoch: u32, time: f64, routes: &BTreeMap<VehicleId, VehicleRoute>) {
    let _ = writeln!(out, "epoch:{epoch} time:{time} vehicles:{}", routes.len());
    for r in routes.values() {
        let _ = write!(
            out,
            "vehicle:{} pos:{},{} anchor:{},{},{}",
            r.vehicle_id,
            r.current_position[0],
            r.current_position[1],
            r.anchor_position[0],
            r.anchor_position[1],
            r.anchor_time
        );
        for w in &r.remaining {
            let _ = write!(out, " wp:{},{},{},{}", w.seq, w.position[0], w.position[1], w.eta);
        }
        out.push('\n');
    }
}

/// Incremental writer that hashes everything it emits and optionally
/// forwards it to a sink.
pub struct LogRecorder<W: Write> {
    hasher: Sha256,
    sink: Option<W>,
    buf: String,
}

impl LogRecorder<std::io::Sink> {
    pub fn hash_only(config: &ScenarioConfig, goal: [f64; 2], initial_count: u32) -> Self {
        Self::start(config, goal, initial_count, None)
    }
}

impl<W: Write> LogRecorder<W> {
    pub fn new(config: &ScenarioConfig, goal: [f64; 2], initial_count: u32, sink: W) -> Self {
        Self::start(config, goal, initial_count, Some(sink))
    }

    fn start(config: &ScenarioConfig, goal: [f64; 2], initial_count: u32, sink: Option<W>) -> Self {
        let mut rec = Self {
            hasher: Sha256::new(),
            sink,
            buf: String::new(),
        };
        rec.buf.push_str(&header_line(config));
        rec.buf.push('\n');
        rec.buf.push_str(&start_line(goal, initial_count));
        rec.buf.push('\n');
        rec
    }

    pub fn record(&mut self, state: &DreamrState) -> Result<()> {
        write_epoch(&mut self.buf, state.epoch, state.time, &state.routes);
        self.flush_buf()
    }

    fn flush_buf(&mut self) -> Result<()> {
        self.hasher.update(self.buf.as_bytes());
        if let Some(sink) = self.sink.as_mut() {
            sink.write_all(self.buf.as_bytes())?;
        }
        self.buf.clear();
        Ok(())
    }

    /// Hex digest of everything recorded so far.
    pub fn finish(mut self) -> Result<String> {
        self.flush_buf()?;
        if let Some(sink) = self.sink.as_mut() {
            sink.flush()?;
        }
        Ok(hex(&self.hasher.finalize()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl ScenarioLog {
    pub fn to_text(&self) -> String {
        let mut out = header_line(&self.config);
        out.push('\n');
        out.push_str(&start_line(self.goal, self.initial_count));
        out.push('\n');
        for e in &self.epochs {
            write_epoch(&mut out, e.epoch, e.time, &e.routes);
        }
        out
    }

    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next_line = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((n, Ok(l))) => Ok((n, l)),
                Some((_, Err(e))) => Err(e.into()),
                None => Err(Error::ScenarioLog {
                    line: 0,
                    reason: format!("unexpected end of log, expected {what}"),
                }),
            }
        };

        let (n, header) = next_line("header")?;
        let config = parse_header(n, &header)?;
        let (n, start) = next_line("goal line")?;
        let fields = Fields::new(n, &start)?;
        let goal = fields.pair("goal")?;
        let initial_count = fields.num("initial_count")?;

        let mut epochs = Vec::new();
        loop {
            let (n, line) = match next_line("epoch") {
                Ok(x) => x,
                Err(Error::ScenarioLog { line: 0, .. }) => break,
                Err(e) => return Err(e),
            };
            if line.trim().is_empty() {
                continue;
            }
            let fields = Fields::new(n, &line)?;
            let epoch = fields.num("epoch")?;
            let time = fields.num("time")?;
            let count: usize = fields.num("vehicles")?;
            let mut routes = BTreeMap::new();
            for _ in 0..count {
                let (n, line) = next_line("vehicle")?;
                let route = parse_vehicle(n, &line)?;
                routes.insert(route.vehicle_id, route);
            }
            epochs.push(EpochRecord { epoch, time, routes });
        }
        Ok(Self {
            config,
            goal,
            initial_count,
            epochs,
        })
    }

    /// Replay source starting at the first recorded epoch.
    pub fn replay(&self) -> (ReplayScenario<'_>, DreamrState) {
        let first = &self.epochs[0];
        let state = DreamrState {
            agent: crate::dynamics::AgentState::at_rest([0.5 * self.config.workspace_side; 2]),
            routes: first.routes.clone(),
            riding_on: None,
            epoch: first.epoch,
            time: first.time,
            fleet: super::Fleet {
                initial_count: self.initial_count,
                next_id: 0,
            },
        };
        (ReplayScenario { log: self, cursor: 0 }, state)
    }
}

/// Feeds recorded epochs back in order. Past the end of the log the world
/// stays frozen at the last record.
pub struct ReplayScenario<'a> {
    log: &'a ScenarioLog,
    cursor: usize,
}

impl ScenarioSource for ReplayScenario<'_> {
    fn advance(&mut self, state: &mut DreamrState) -> Result<()> {
        let last_positions = state
            .routes
            .iter()
            .map(|(id, r)| (*id, r.current_position))
            .collect::<BTreeMap<_, _>>();
        if self.cursor + 1 < self.log.epochs.len() {
            self.cursor += 1;
            let rec = &self.log.epochs[self.cursor];
            state.routes = rec.routes.clone();
            state.epoch = rec.epoch;
            state.time = rec.time;
        } else {
            state.epoch += 1;
            state.time += self.log.config.epoch_dt;
        }
        sync_rider(state, &last_positions);
        Ok(())
    }
}

struct Fields<'a> {
    line: usize,
    map: BTreeMap<&'a str, &'a str>,
    waypoints: Vec<&'a str>,
}

impl<'a> Fields<'a> {
    fn new(line: usize, text: &'a str) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut waypoints = Vec::new();
        for token in text.split_whitespace() {
            let (k, v) = token.split_once(':').ok_or_else(|| Error::ScenarioLog {
                line,
                reason: format!("token `{token}` is not field:value"),
            })?;
            if k == "wp" {
                waypoints.push(v);
            } else {
                map.insert(k, v);
            }
        }
        Ok(Self { line, map, waypoints })
    }

    fn err(&self, reason: String) -> Error {
        Error::ScenarioLog { line: self.line, reason }
    }

    fn raw(&self, key: &str) -> Result<&'a str> {
        self.map
            .get(key)
            .copied()
            .ok_or_else(|| self.err(format!("missing field `{key}`")))
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.raw(key)?;
        raw.parse().map_err(|_| self.err(format!("bad value `{raw}` for `{key}`")))
    }

    fn list<T: std::str::FromStr>(&self, key: &str, text: &str, n: usize) -> Result<Vec<T>> {
        let parts = text
            .split(',')
            .map(|p| p.parse::<T>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| self.err(format!("bad value `{text}` for `{key}`")))?;
        if parts.len() != n {
            return Err(self.err(format!("`{key}` needs {n} components, got {}", parts.len())));
        }
        Ok(parts)
    }

    fn pair<T: std::str::FromStr + Copy>(&self, key: &str) -> Result<[T; 2]> {
        let v = self.list(key, self.raw(key)?, 2)?;
        Ok([v[0], v[1]])
    }
}

fn parse_header(line: usize, text: &str) -> Result<ScenarioConfig> {
    let f = Fields::new(line, text)?;
    let version: u32 = f.num("scenario_log")?;
    if version != LOG_VERSION {
        return Err(f.err(format!("unsupported log version {version}")));
    }
    Ok(ScenarioConfig {
        workspace_side: f.num("workspace_side")?,
        epochs: f.num("epochs")?,
        epoch_dt: f.num("epoch_dt")?,
        initial_cars: f.pair("initial_cars")?,
        max_cars_multiplier: f.num("max_cars_multiplier")?,
        waypoints_per_route: f.pair("waypoints_per_route")?,
        route_duration: f.pair("route_duration")?,
        min_endpoint_separation: f.num("min_endpoint_separation")?,
        max_car_speed: f.num("max_car_speed")?,
        perturb_probability: f.num("perturb_probability")?,
        perturb_bound: f.num("perturb_bound")?,
        goal_corner_offset: f.pair("goal_corner_offset")?,
        seed: f.num("seed")?,
    })
}

fn parse_vehicle(line: usize, text: &str) -> Result<VehicleRoute> {
    let f = Fields::new(line, text)?;
    let anchor: Vec<f64> = f.list("anchor", f.raw("anchor")?, 3)?;
    let remaining = f
        .waypoints
        .iter()
        .map(|w| {
            let v: Vec<f64> = f.list("wp", w, 4)?;
            if v[0] < 0.0 || v[0].fract() != 0.0 {
                return Err(f.err(format!("bad waypoint index in `{w}`")));
            }
            Ok(Waypoint {
                seq: v[0] as u32,
                position: [v[1], v[2]],
                eta: v[3],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VehicleRoute {
        vehicle_id: f.num("vehicle")?,
        current_position: f.pair("pos")?,
        anchor_position: [anchor[0], anchor[1]],
        anchor_time: anchor[2],
        remaining,
    })
}
