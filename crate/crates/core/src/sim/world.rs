//! Arena state and the per-iteration scheduler.

use std::f64::consts::{FRAC_PI_4, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::behaviors::{self, keys, Color};
use crate::bt::BtError;
use crate::metrics::{LevelHistogram, MetricsLedger};
use crate::modality::{deliver_queries, deliver_responses, Agent, Modality, WireMessage};

use super::config::{ConfigError, WorldConfig};

const PLACEMENT_ATTEMPTS: u32 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetStatus {
    Free,
    Carried { by: usize },
    Collected { at: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub id: usize,
    pub color: Color,
    pub x: f64,
    pub y: f64,
    pub status: TargetStatus,
}

/// Physical state of one robot; its knowledge lives in the matching [`Agent`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub carrying: Option<usize>,
}

/// Unit vector of collision ray `k`; ray 0 points east, counter-clockwise.
pub fn ray_direction(k: usize) -> (f64, f64) {
    let a = k as f64 * FRAC_PI_4;
    (a.cos(), a.sin())
}

/// Index of the ray whose 45 degree sector contains the bearing `(dx, dy)`.
fn ray_for_bearing(dx: f64, dy: f64) -> usize {
    let a = dy.atan2(dx).rem_euclid(2.0 * PI);
    ((a / FRAC_PI_4).round() as usize) % 8
}

/// Points away from the triggered rays: the normalized negative sum of their
/// unit vectors, or zero when none fire or they cancel out.
pub fn repulsion_vector(rays: u8) -> (f64, f64) {
    let (mut sx, mut sy) = (0.0, 0.0);
    for k in 0..8 {
        if rays & (1 << k) != 0 {
            let (ux, uy) = ray_direction(k);
            sx -= ux;
            sy -= uy;
        }
    }
    let len = sx.hypot(sy);
    if len < 1e-9 {
        (0.0, 0.0)
    } else {
        (sx / len, sy / len)
    }
}

/// The simulated arena with its robots and targets.
#[derive(Debug, Clone)]
pub struct World {
    cfg: WorldConfig,
    rng: ChaCha8Rng,
    iteration: u64,
    bodies: Vec<Body>,
    agents: Vec<Agent>,
    targets: Vec<Target>,
    pending: Vec<WireMessage>,
    posted: Vec<WireMessage>,
    ledger: MetricsLedger,
    collected: u64,
    stop: Option<u64>,
    finished: bool,
}

impl World {
    /// Places targets and robots uniformly at random outside the zones and
    /// obstacles, and installs each robot's prior knowledge.
    pub fn new(cfg: WorldConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let [w, h] = cfg.arena;

        let mut targets = Vec::with_capacity(cfg.targets.total());
        for color in Color::ALL {
            for _ in 0..cfg.targets.get(color) {
                let (x, y) = place(&cfg, &mut rng, "a target")?;
                targets.push(Target {
                    id: targets.len(),
                    color,
                    x,
                    y,
                    status: TargetStatus::Free,
                });
            }
        }

        let mut bodies = Vec::with_capacity(cfg.robot_count());
        let mut agents = Vec::with_capacity(cfg.robot_count());
        for (id, (modality, class)) in cfg.robots().into_iter().enumerate() {
            let (x, y) = place(&cfg, &mut rng, "a robot")?;
            let heading = rng.gen_range(0.0..2.0 * PI);
            bodies.push(Body {
                x,
                y,
                heading,
                carrying: None,
            });
            let agent = Agent::new(id, modality, &class.colors(), cfg.protocol, behaviors::schema(w, h))
                .map_err(|e| ConfigError::Invalid {
                    path: "roster".into(),
                    message: e.to_string(),
                })?;
            agents.push(agent);
        }

        let roster: Vec<(Modality, usize)> = agents.iter().map(|a| (a.modality(), a.kb().len())).collect();
        let ledger = MetricsLedger::new(&roster, levels(&agents));
        let finished = cfg.iterations == 0;
        Ok(Self {
            cfg,
            rng,
            iteration: 0,
            bodies,
            agents,
            targets,
            pending: Vec::new(),
            posted: Vec::new(),
            ledger,
            collected: 0,
            stop: None,
            finished,
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    /// The next iteration to run.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn bodies(&self) -> &[Body] {
        &self.bodies
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn targets(&self) -> &[Target] {
        &self.targets
    }

    pub fn ledger(&self) -> &MetricsLedger {
        &self.ledger
    }

    pub fn collected(&self) -> u64 {
        self.collected
    }

    /// Iteration in which the last target was collected.
    pub fn stop_iteration(&self) -> Option<u64> {
        self.stop
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Queries and responses posted during the last step.
    pub fn posted_messages(&self) -> &[WireMessage] {
        &self.posted
    }

    /// Robot count per knowledge level.
    pub fn knowledge_levels(&self) -> LevelHistogram {
        levels(&self.agents)
    }

    /// `(free, carried, collected)` target counts.
    pub fn target_census(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for t in &self.targets {
            match t.status {
                TargetStatus::Free => c.0 += 1,
                TargetStatus::Carried { .. } => c.1 += 1,
                TargetStatus::Collected { .. } => c.2 += 1,
            }
        }
        c
    }

    fn connected(&self, a: usize, b: usize) -> bool {
        let (p, q) = (&self.bodies[a], &self.bodies[b]);
        (p.x - q.x).hypot(p.y - q.y) <= self.cfg.comm_range
    }

    /// Runs one iteration. Does nothing once the trial is over.
    pub fn step(&mut self) -> Result<(), BtError> {
        if self.finished {
            return Ok(());
        }
        let it = self.iteration;
        self.posted.clear();

        for i in 0..self.agents.len() {
            self.sense(i)?;
        }

        let responses = std::mem::take(&mut self.pending);
        let bodies = &self.bodies;
        let range = self.cfg.comm_range;
        let connected = |a: usize, b: usize| {
            let (p, q) = (&bodies[a], &bodies[b]);
            (p.x - q.x).hypot(p.y - q.y) <= range
        };
        deliver_responses(&mut self.agents, &responses, connected, it, &mut self.ledger)?;

        let mut queries = Vec::new();
        for a in &mut self.agents {
            a.process_modality(it, &mut self.ledger)?;
            a.tick(it)?;
            queries.extend(a.maybe_post_query(it, &mut self.ledger));
        }

        for i in 0..self.agents.len() {
            self.apply_motion(i)?;
        }
        self.resolve_pickups_and_drops(it)?;

        let pending = deliver_queries(&self.agents, &queries, |a, b| self.connected(a, b), it);
        self.posted.extend(queries);
        self.posted.extend(pending.iter().cloned());
        self.pending = pending;

        for a in &mut self.agents {
            a.end_iteration()?;
        }
        self.ledger.sample(it, self.collected);

        self.iteration += 1;
        if self.collected as usize == self.targets.len() && !self.targets.is_empty() {
            self.stop = Some(it);
            self.finished = true;
        }
        if self.iteration >= self.cfg.iterations {
            self.finished = true;
        }
        if self.finished {
            self.finish_ledger();
        }
        Ok(())
    }

    fn finish_ledger(&mut self) {
        let knowledge: Vec<usize> = self.agents.iter().map(|a| a.kb().len()).collect();
        let levels = levels(&self.agents);
        self.ledger.finish(&knowledge, levels, self.stop);
    }

    /// Runs until all targets are collected or the iteration budget is spent.
    pub fn run(&mut self) -> Result<(), BtError> {
        while !self.finished {
            self.step()?;
        }
        Ok(())
    }

    pub fn into_ledger(mut self) -> MetricsLedger {
        if self.cfg.iterations == 0 {
            self.finish_ledger();
        }
        self.ledger
    }

    /// Collision rays of robot `i` as a bitmask: walls, other robots and obstacles.
    pub fn collision_rays(&self, i: usize) -> u8 {
        let me = &self.bodies[i];
        let range = self.cfg.robot.ray_range;
        let [w, h] = self.cfg.arena;
        let mut rays = 0u8;
        for k in 0..8 {
            let (ux, uy) = ray_direction(k);
            let mut t = f64::INFINITY;
            if ux > 1e-9 {
                t = t.min((w - me.x) / ux);
            } else if ux < -1e-9 {
                t = t.min(-me.x / ux);
            }
            if uy > 1e-9 {
                t = t.min((h - me.y) / uy);
            } else if uy < -1e-9 {
                t = t.min(-me.y / uy);
            }
            if t <= range {
                rays |= 1 << k;
            }
        }
        for (j, other) in self.bodies.iter().enumerate() {
            if j == i {
                continue;
            }
            let (dx, dy) = (other.x - me.x, other.y - me.y);
            let d = dx.hypot(dy);
            if d <= range && d > 1e-9 {
                rays |= 1 << ray_for_bearing(dx, dy);
            }
        }
        for o in &self.cfg.obstacles {
            let (dx, dy) = (o.x - me.x, o.y - me.y);
            let d = dx.hypot(dy);
            if d - o.radius <= range && d > 1e-9 {
                rays |= 1 << ray_for_bearing(dx, dy);
            }
        }
        rays
    }

    fn zone_of(&self, x: f64, y: f64) -> Option<Color> {
        let [w, h] = self.cfg.arena;
        Color::ALL.into_iter().find(|c| {
            let (zx, zy) = behaviors::zone_corner(*c, w, h);
            (x - zx).hypot(y - zy) <= self.cfg.zone_radius
        })
    }

    fn sense(&mut self, i: usize) -> Result<(), BtError> {
        let rays = self.collision_rays(i);
        let (rx, ry) = repulsion_vector(rays);
        let jitter_bound = self.cfg.robot.walk_jitter_deg.to_radians();
        let jitter = if jitter_bound > 0.0 {
            self.rng.gen_range(-jitter_bound..=jitter_bound)
        } else {
            0.0
        };
        let body = &self.bodies[i];
        let sensor = self.cfg.robot.sensor_radius;
        let nearest = self
            .targets
            .iter()
            .filter(|t| t.status == TargetStatus::Free)
            .map(|t| ((t.x - body.x).hypot(t.y - body.y), t))
            .filter(|(d, _)| *d <= sensor)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)))
            .map(|(_, t)| (t.color, t.id, t.x, t.y));
        let zone = self.zone_of(body.x, body.y);
        let carrying = body.carrying.map(|t| self.targets[t].color);
        let (x, y, heading) = (body.x, body.y, body.heading);

        let agent = &mut self.agents[i];
        let bb = agent.blackboard_mut();
        bb.set(keys::POSE_X, x);
        bb.set(keys::POSE_Y, y);
        bb.set(keys::HEADING, heading);
        bb.set(keys::RAYS, rays as i64);
        bb.set(keys::REPULSION_X, rx);
        bb.set(keys::REPULSION_Y, ry);
        bb.set(keys::WALK_JITTER, jitter);
        bb.set(keys::ZONE, zone.map_or(behaviors::NONE, Color::name));
        bb.set(keys::CARRYING, carrying.map_or(behaviors::NONE, Color::name));
        behaviors::write_detection(bb, nearest);
        agent.refresh_percept()
    }

    fn apply_motion(&mut self, i: usize) -> Result<(), BtError> {
        let agent = &self.agents[i];
        let bb = agent.blackboard();
        let heading = bb.float(keys::HEADING)?;
        self.bodies[i].heading = heading;
        if agent.is_frozen() || bb.bool(keys::INTENT_HALT)? || !bb.bool(keys::INTENT_MOVE)? {
            return Ok(());
        }
        let walking = bb.bool(keys::FALLBACK_REACHED)?;
        let (ix, iy) = (bb.float(keys::INTENT_X)?, bb.float(keys::INTENT_Y)?);
        let (rx, ry) = (bb.float(keys::REPULSION_X)?, bb.float(keys::REPULSION_Y)?);
        let rays = bb.int(keys::RAYS)?;
        let (mut vx, mut vy) = (ix + rx, iy + ry);
        let len = vx.hypot(vy);
        if len > 1.0 {
            vx /= len;
            vy /= len;
        }
        let speed = self.cfg.robot.speed;
        let [w, h] = self.cfg.arena;
        let body = &mut self.bodies[i];
        if walking && rays != 0 {
            body.heading = if len < 1e-9 { heading + PI } else { vy.atan2(vx) };
        }
        let (mut nx, mut ny) = (body.x + vx * speed, body.y + vy * speed);
        if !(0.0..=w).contains(&nx) {
            nx = nx.clamp(0.0, w);
            body.heading = PI - body.heading;
        }
        if !(0.0..=h).contains(&ny) {
            ny = ny.clamp(0.0, h);
            body.heading = -body.heading;
        }
        let blocked = self.cfg.obstacles.iter().any(|o| (nx - o.x).hypot(ny - o.y) < o.radius);
        if blocked {
            body.heading += PI;
        } else {
            body.x = nx;
            body.y = ny;
        }
        body.heading = body.heading.rem_euclid(2.0 * PI);
        if let Some(t) = body.carrying {
            self.targets[t].x = body.x;
            self.targets[t].y = body.y;
        }
        Ok(())
    }

    /// Pickups go in robot-id order, so the lower id wins a contested target.
    fn resolve_pickups_and_drops(&mut self, it: u64) -> Result<(), BtError> {
        let sensor = self.cfg.robot.sensor_radius;
        for i in 0..self.agents.len() {
            let bb = self.agents[i].blackboard();
            let pick = bb.int(keys::INTENT_PICK)?;
            let drop = bb.bool(keys::INTENT_DROP)?;
            let body = &self.bodies[i];
            if drop {
                if let Some(t) = body.carrying {
                    let zone = self.zone_of(body.x, body.y);
                    let target = &mut self.targets[t];
                    if zone == Some(target.color) {
                        target.status = TargetStatus::Collected { at: it };
                        self.collected += 1;
                    } else {
                        target.status = TargetStatus::Free;
                    }
                    self.bodies[i].carrying = None;
                }
            } else if pick >= 0 && body.carrying.is_none() {
                let t = pick as usize;
                if let Some(target) = self.targets.get_mut(t) {
                    let d = (target.x - body.x).hypot(target.y - body.y);
                    if target.status == TargetStatus::Free && d <= sensor {
                        target.status = TargetStatus::Carried { by: i };
                        target.x = body.x;
                        target.y = body.y;
                        self.bodies[i].carrying = Some(t);
                    }
                }
            }
        }
        Ok(())
    }

    /// A serializable picture of the current state.
    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            iteration: self.iteration,
            collected: self.collected,
            robots: self
                .bodies
                .iter()
                .zip(&self.agents)
                .map(|(b, a)| RobotView {
                    id: a.id(),
                    x: b.x,
                    y: b.y,
                    heading: b.heading,
                    modality: a.modality(),
                    level: a.knowledge_level(),
                    carrying: b.carrying.map(|t| self.targets[t].color),
                    waiting: a.is_waiting(),
                    buffered: a.buffer().len(),
                })
                .collect(),
            targets: self.targets.clone(),
        }
    }
}

fn place(cfg: &WorldConfig, rng: &mut ChaCha8Rng, what: &str) -> Result<(f64, f64), ConfigError> {
    let [w, h] = cfg.arena;
    for _ in 0..PLACEMENT_ATTEMPTS {
        let x = rng.gen_range(0.0..w);
        let y = rng.gen_range(0.0..h);
        let in_zone = Color::ALL.into_iter().any(|c| {
            let (zx, zy) = behaviors::zone_corner(c, w, h);
            (x - zx).hypot(y - zy) <= cfg.zone_radius
        });
        let in_obstacle = cfg.obstacles.iter().any(|o| (x - o.x).hypot(y - o.y) <= o.radius);
        if !in_zone && !in_obstacle {
            return Ok((x, y));
        }
    }
    Err(ConfigError::Placement {
        what: what.into(),
        attempts: PLACEMENT_ATTEMPTS,
    })
}

fn levels(agents: &[Agent]) -> LevelHistogram {
    let mut h = [0; 5];
    for a in agents {
        h[a.knowledge_level()] += 1;
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotView {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub modality: Modality,
    pub level: usize,
    pub carrying: Option<Color>,
    pub waiting: bool,
    pub buffered: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub iteration: u64,
    pub collected: u64,
    pub robots: Vec<RobotView>,
    pub targets: Vec<Target>,
}

/// Runs a whole trial and returns its ledger.
pub fn run_trial(cfg: &WorldConfig) -> Result<MetricsLedger, crate::Error> {
    let mut world = World::new(cfg.clone())?;
    world.run()?;
    Ok(world.into_ledger())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behaviors::KnowledgeClass;
    use crate::sim::config::{RosterEntry, TargetCounts};

    fn cfg(roster: Vec<RosterEntry>, targets: usize, iterations: u64) -> WorldConfig {
        WorldConfig {
            arena: [400.0, 400.0],
            targets: TargetCounts::uniform(targets),
            zone_radius: 60.0,
            obstacles: vec![],
            comm_range: 100.0,
            roster,
            iterations,
            seed: 3,
            robot: Default::default(),
            protocol: Default::default(),
        }
    }

    fn group(modality: Modality, class: KnowledgeClass, count: usize) -> RosterEntry {
        RosterEntry { modality, class, count }
    }

    #[test]
    fn repulsion_examples() {
        assert_eq!(repulsion_vector(0), (0.0, 0.0));
        assert_eq!(repulsion_vector(0xff), (0.0, 0.0));
        // North is ray 2, east is ray 0.
        let (x, y) = repulsion_vector(0b101);
        let s = -(0.5f64).sqrt();
        assert!((x - s).abs() < 1e-12 && (y - s).abs() < 1e-12);
    }

    #[test]
    fn bearings_map_to_sectors() {
        assert_eq!(ray_for_bearing(1.0, 0.0), 0);
        assert_eq!(ray_for_bearing(0.0, 1.0), 2);
        assert_eq!(ray_for_bearing(-1.0, 0.0), 4);
        assert_eq!(ray_for_bearing(1.0, -0.01), 0);
        assert_eq!(ray_for_bearing(1.0, -1.0), 7);
    }

    #[test]
    fn roster_priors_and_target_count() {
        let c = cfg(
            vec![group(Modality::Qru, KnowledgeClass::I, 39), group(Modality::Qru, KnowledgeClass::M, 1)],
            25,
            10,
        );
        let mut c = c;
        c.arena = [2000.0, 2000.0];
        c.zone_radius = 100.0;
        let w = World::new(c).unwrap();
        assert_eq!(w.targets().len(), 100);
        assert_eq!(w.knowledge_levels(), [39, 0, 0, 0, 1]);
        let known: Vec<_> = w.agents().iter().map(|a| a.kb().len()).collect();
        assert_eq!(known.iter().filter(|k| **k == 4).count(), 1);
        assert_eq!(known.iter().filter(|k| **k == 0).count(), 39);
    }

    #[test]
    fn placement_avoids_zones() {
        let w = World::new(cfg(vec![group(Modality::Qru, KnowledgeClass::I, 10)], 10, 1)).unwrap();
        for t in w.targets() {
            assert!(w.zone_of(t.x, t.y).is_none());
        }
    }

    #[test]
    fn overcrowded_placement_fails() {
        let mut c = cfg(vec![group(Modality::Qru, KnowledgeClass::I, 1)], 1, 1);
        c.obstacles = vec![crate::sim::Obstacle {
            x: 200.0,
            y: 200.0,
            radius: 600.0,
        }];
        assert!(matches!(World::new(c), Err(ConfigError::Placement { .. })));
    }

    #[test]
    fn zero_iterations_gives_empty_timeline() {
        let l = run_trial(&cfg(vec![group(Modality::Qru, KnowledgeClass::I, 3)], 2, 0)).unwrap();
        assert!(l.rows().is_empty());
        assert_eq!(l.final_levels(), [3, 0, 0, 0, 0]);
    }

    #[test]
    fn all_multi_robots_never_query() {
        let l = run_trial(&cfg(vec![group(Modality::Qru, KnowledgeClass::M, 6)], 3, 3000)).unwrap();
        assert_eq!(l.totals().queries, 0);
        assert!(l.collected() > 0);
    }

    #[test]
    fn robots_stay_inside_and_targets_are_conserved() {
        let c = cfg(
            vec![group(Modality::Eu, KnowledgeClass::I, 8), group(Modality::Eu, KnowledgeClass::M, 1)],
            4,
            3000,
        );
        let mut w = World::new(c).unwrap();
        let mut last = 0;
        while !w.is_finished() {
            w.step().unwrap();
            for b in w.bodies() {
                assert!((0.0..=400.0).contains(&b.x) && (0.0..=400.0).contains(&b.y));
            }
            let (f, c, done) = w.target_census();
            assert_eq!(f + c + done, 16);
            assert!(done as u64 >= last);
            last = done as u64;
        }
    }

    #[test]
    fn contested_target_goes_to_lower_id() {
        let c = cfg(vec![group(Modality::Qru, KnowledgeClass::R, 2)], 0, 5);
        let mut c = c;
        c.targets.red = 1;
        let mut w = World::new(c).unwrap();
        let (tx, ty) = (w.targets[0].x, w.targets[0].y);
        for b in &mut w.bodies {
            b.x = tx;
            b.y = ty;
        }
        w.step().unwrap();
        assert_eq!(w.targets[0].status, TargetStatus::Carried { by: 0 });
        assert_eq!(w.bodies[1].carrying, None);
    }

    #[test]
    fn carried_target_reaching_its_zone_is_collected() {
        let mut c = cfg(vec![group(Modality::Qru, KnowledgeClass::R, 1)], 0, 2000);
        c.targets.red = 1;
        let mut w = World::new(c).unwrap();
        let (tx, ty) = (w.targets[0].x, w.targets[0].y);
        w.bodies[0].x = tx;
        w.bodies[0].y = ty;
        w.run().unwrap();
        assert_eq!(w.collected(), 1);
        let at = match w.targets[0].status {
            TargetStatus::Collected { at } => at,
            s => panic!("{s:?}"),
        };
        assert_eq!(w.stop_iteration(), Some(at));
        assert_eq!(w.ledger().rows().last().unwrap().collected, 1);
    }
}
