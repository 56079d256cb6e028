//! The eight synthetic binary tasks built from lines, angles and triangles.
//!
//! | task   | label 0                         | label 1                          | distractors |
//! |--------|---------------------------------|----------------------------------|-------------|
//! | `ac`   | angle, 20°–160°                 | crossing pair                    | 0 |
//! | `acl`  | angle, 20°–160°                 | crossing pair                    | 1 |
//! | `at`   | angle, 20°–160°                 | triangle, every angle 20°–160°   | 0 |
//! | `atl`  | angle, 20°–160°                 | triangle, every angle 20°–160°   | 1 |
//! | `sbl`  | blunt angle, 100°–160°          | sharp angle, 20°–80°             | 1 |
//! | `sbt`  | blunt triangle (max 100°–160°)  | sharp triangle (all 20°–80°)     | 1 |
//! | `sb2l` | blunt angle, 100°–160°          | sharp angle, 20°–80°             | 2 |
//! | `cnc`  | crossing pair                   | non-crossing pair                | 0 |
//!
//! Common rules: every segment is at least 13 px long and lies inside the
//! 32×32 frame; a crossing pair meets between 20% and 80% along each segment,
//! at an angle between 20° and 160°; a distractor touches no figure segment
//! (nor the other distractor) and keeps at least [`CLEARANCE`] px away from
//! them, as does the non-crossing pair.
//!
//! Scenes are drawn by rejection: figure parameters (position, orientation,
//! lengths, amplitude) are sampled and the whole scene is re-checked by
//! [`validate_scene`], which recomputes every constraint from raw coordinates
//! with its own geometry code.
//!
//! Rendering puts 2-px anti-aliased strokes on one of four value-noise
//! backgrounds (lattice spacing 1, 2, 4 or 8 px, bilinearly interpolated).
//! White strokes sit on a dark background in `[0, 0.2]`, black strokes on a
//! light one in `[0.8, 1]`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{quantize, LabeledDataset, Split};
use crate::numerics::SeededRng;
use crate::{Error, Result};

pub const IMAGE_SIDE: usize = 32;
pub const MIN_SEGMENT_LEN: f64 = 13.0;
pub const CROSS_WINDOW: (f64, f64) = (0.2, 0.8);
pub const ANGLE_RANGE: (f64, f64) = (20.0, 160.0);
pub const SHARP_RANGE: (f64, f64) = (20.0, 80.0);
pub const BLUNT_RANGE: (f64, f64) = (100.0, 160.0);
/// Minimum distance between segments that must not cross.
pub const CLEARANCE: f64 = 3.0;
pub const MAX_ATTEMPTS: usize = 10_000;
pub const DARK_BAND: (f64, f64) = (0.0, 0.2);
pub const LIGHT_BAND: (f64, f64) = (0.8, 1.0);
/// Lattice spacing of the four value-noise backgrounds.
pub const BACKGROUND_SPACINGS: [usize; 4] = [1, 2, 4, 8];
pub const STROKE_WIDTH: f64 = 2.0;
/// Full-size split sizes: train, validation, test.
pub const FULL_SIZES: (usize, usize, usize) = (330_000, 10_000, 10_000);

const FRAME: f64 = IMAGE_SIDE as f64;
const MARGIN: f64 = 1.0;
const MAX_RAY_LEN: f64 = 24.0;
const MAX_PAIR_LEN: f64 = 28.0;
const DISTRACTOR_TRIES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    fn add_scaled(self, d: Point, s: f64) -> Point {
        Point::new(self.x + d.x * s, self.y + d.y * s)
    }

    fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub p0: Point,
    pub p1: Point,
}

impl Segment {
    pub fn new(p0: Point, p1: Point) -> Self {
        Self { p0, p1 }
    }

    pub fn length(&self) -> f64 {
        self.p1.sub(self.p0).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskId {
    Ac,
    Acl,
    At,
    Atl,
    Sbl,
    Sbt,
    Sb2l,
    Cnc,
}

impl TaskId {
    pub const ALL: [TaskId; 8] = [
        TaskId::Ac,
        TaskId::Acl,
        TaskId::At,
        TaskId::Atl,
        TaskId::Sbl,
        TaskId::Sbt,
        TaskId::Sb2l,
        TaskId::Cnc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::Ac => "ac",
            TaskId::Acl => "acl",
            TaskId::At => "at",
            TaskId::Atl => "atl",
            TaskId::Sbl => "sbl",
            TaskId::Sbt => "sbt",
            TaskId::Sb2l => "sb2l",
            TaskId::Cnc => "cnc",
        }
    }

    pub fn distractors(self) -> usize {
        match self {
            TaskId::Ac | TaskId::At | TaskId::Cnc => 0,
            TaskId::Acl | TaskId::Atl | TaskId::Sbl | TaskId::Sbt => 1,
            TaskId::Sb2l => 2,
        }
    }

    /// The figure that defines class `label` for this task.
    pub fn figure_kind(self, label: u8) -> Result<FigureKind> {
        use FigureKind::*;
        let kinds = match self {
            TaskId::Ac | TaskId::Acl => [Angle, CrossingPair],
            TaskId::At | TaskId::Atl => [Angle, Triangle],
            TaskId::Sbl | TaskId::Sb2l => [BluntAngle, SharpAngle],
            TaskId::Sbt => [BluntTriangle, SharpTriangle],
            TaskId::Cnc => [CrossingPair, NonCrossingPair],
        };
        kinds
            .get(label as usize)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("label {label} is not binary")))
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskId::ALL
            .into_iter()
            .find(|t| t.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown synthetic task '{s}'")))
    }
}

/// What a class is made of, including its amplitude constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureKind {
    Angle,
    SharpAngle,
    BluntAngle,
    Triangle,
    SharpTriangle,
    BluntTriangle,
    CrossingPair,
    NonCrossingPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Figure {
    /// Two rays from a shared vertex.
    Angle { vertex: Point, a: Point, b: Point },
    Triangle { vertices: [Point; 3] },
    CrossingPair { a: Segment, b: Segment },
    NonCrossingPair { a: Segment, b: Segment },
}

impl Figure {
    pub fn segments(&self) -> Vec<Segment> {
        match *self {
            Figure::Angle { vertex, a, b } => vec![Segment::new(vertex, a), Segment::new(vertex, b)],
            Figure::Triangle { vertices: [p, q, r] } => {
                vec![Segment::new(p, q), Segment::new(q, r), Segment::new(r, p)]
            }
            Figure::CrossingPair { a, b } | Figure::NonCrossingPair { a, b } => vec![a, b],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    WhiteOnDark,
    BlackOnLight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub task: TaskId,
    pub label: u8,
    pub figures: Vec<Figure>,
    pub distractors: Vec<Segment>,
    pub polarity: Polarity,
    /// Index into [`BACKGROUND_SPACINGS`].
    pub background_kind: u8,
}

impl Scene {
    pub fn segments(&self) -> Vec<Segment> {
        self.figures
            .iter()
            .flat_map(Figure::segments)
            .chain(self.distractors.iter().copied())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stimulus {
    /// Row-major 32×32 intensities in `[0, 1]`.
    pub pixels: Vec<f64>,
    pub label: u8,
}

/// Amplitude in degrees between two rays that start at the same vertex.
pub fn angle_amplitude(ray_a: Segment, ray_b: Segment) -> Result<f64> {
    if ray_a.p0 != ray_b.p0 {
        return Err(Error::InvalidArgument("rays do not share their start point".into()));
    }
    let u = ray_a.p1.sub(ray_a.p0);
    let v = ray_b.p1.sub(ray_b.p0);
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::InvalidArgument("zero-length ray".into()));
    }
    let cos = ((u.x * v.x + u.y * v.y) / (nu * nv)).clamp(-1.0, 1.0);
    Ok(cos.acos().to_degrees())
}

/// Intersection parameters `(t1, t2)` along each segment if the open
/// segments cross; parallel and collinear pairs give `None`.
pub fn segments_cross(s1: Segment, s2: Segment) -> Option<(f64, f64)> {
    let r = s1.p1.sub(s1.p0);
    let s = s2.p1.sub(s2.p0);
    let denom = r.x * s.y - r.y * s.x;
    if denom.abs() <= 1e-12 * r.norm() * s.norm() {
        return None;
    }
    let qp = s2.p0.sub(s1.p0);
    let t = (qp.x * s.y - qp.y * s.x) / denom;
    let u = (qp.x * r.y - qp.y * r.x) / denom;
    (t > 0.0 && t < 1.0 && u > 0.0 && u < 1.0).then_some((t, u))
}

fn in_frame(p: Point) -> bool {
    (MARGIN..=FRAME - MARGIN).contains(&p.x) && (MARGIN..=FRAME - MARGIN).contains(&p.y)
}

fn random_point(rng: &mut SeededRng) -> Point {
    Point::new(
        rng.uniform(MARGIN, FRAME - MARGIN).unwrap(),
        rng.uniform(MARGIN, FRAME - MARGIN).unwrap(),
    )
}

fn direction(theta: f64) -> Point {
    Point::new(theta.cos(), theta.sin())
}

fn random_segment(rng: &mut SeededRng, max_len: f64) -> Segment {
    let centre = random_point(rng);
    let len = rng.uniform(MIN_SEGMENT_LEN, max_len).unwrap();
    let d = direction(rng.uniform(0.0, std::f64::consts::TAU).unwrap());
    Segment::new(centre.add_scaled(d, -len / 2.0), centre.add_scaled(d, len / 2.0))
}

fn sample_angle(rng: &mut SeededRng, range: (f64, f64)) -> Option<Figure> {
    let vertex = random_point(rng);
    let theta = rng.uniform(0.0, std::f64::consts::TAU).unwrap();
    let amplitude = rng.uniform(range.0, range.1).unwrap().to_radians();
    let turn = if rng.bernoulli(0.5) { amplitude } else { -amplitude };
    let a = vertex.add_scaled(direction(theta), rng.uniform(MIN_SEGMENT_LEN, MAX_RAY_LEN).unwrap());
    let b = vertex.add_scaled(direction(theta + turn), rng.uniform(MIN_SEGMENT_LEN, MAX_RAY_LEN).unwrap());
    if !(in_frame(a) && in_frame(b)) {
        return None;
    }
    let measured = angle_amplitude(Segment::new(vertex, a), Segment::new(vertex, b)).ok()?;
    (range.0..=range.1)
        .contains(&measured)
        .then_some(Figure::Angle { vertex, a, b })
}

fn triangle_angles(v: [Point; 3]) -> Option<[f64; 3]> {
    let mut out = [0.0; 3];
    for i in 0..3 {
        let p = v[i];
        out[i] = angle_amplitude(Segment::new(p, v[(i + 1) % 3]), Segment::new(p, v[(i + 2) % 3])).ok()?;
    }
    Some(out)
}

fn sample_triangle(rng: &mut SeededRng, kind: FigureKind) -> Option<Figure> {
    let vertices = [random_point(rng), random_point(rng), random_point(rng)];
    let sides_ok = (0..3).all(|i| Segment::new(vertices[i], vertices[(i + 1) % 3]).length() >= MIN_SEGMENT_LEN);
    if !sides_ok {
        return None;
    }
    let angles = triangle_angles(vertices)?;
    let within = |r: (f64, f64)| move |a: &f64| (r.0..=r.1).contains(a);
    let max = angles.iter().copied().fold(0.0, f64::max);
    let ok = angles.iter().all(within(ANGLE_RANGE))
        && match kind {
            FigureKind::SharpTriangle => angles.iter().all(within(SHARP_RANGE)),
            FigureKind::BluntTriangle => within(BLUNT_RANGE)(&max),
            _ => true,
        };
    ok.then_some(Figure::Triangle { vertices })
}

fn sample_crossing_pair(rng: &mut SeededRng) -> Option<Figure> {
    let a = random_segment(rng, MAX_PAIR_LEN);
    let t1 = rng.uniform(CROSS_WINDOW.0, CROSS_WINDOW.1).unwrap();
    let t2 = rng.uniform(CROSS_WINDOW.0, CROSS_WINDOW.1).unwrap();
    let at = a.p0.add_scaled(a.p1.sub(a.p0), t1);
    let len = rng.uniform(MIN_SEGMENT_LEN, MAX_PAIR_LEN).unwrap();
    let theta_a = (a.p1.y - a.p0.y).atan2(a.p1.x - a.p0.x);
    let between = rng.uniform(ANGLE_RANGE.0, ANGLE_RANGE.1).unwrap().to_radians();
    let d = direction(theta_a + between);
    let b = Segment::new(at.add_scaled(d, -t2 * len), at.add_scaled(d, (1.0 - t2) * len));
    if ![a.p0, a.p1, b.p0, b.p1].into_iter().all(in_frame) {
        return None;
    }
    let (u1, u2) = segments_cross(a, b)?;
    let window = CROSS_WINDOW.0..=CROSS_WINDOW.1;
    (window.contains(&u1) && window.contains(&u2)).then_some(Figure::CrossingPair { a, b })
}

/// Closest distance between two segments (zero if they intersect).
fn segment_distance(a: Segment, b: Segment) -> f64 {
    if segments_cross(a, b).is_some() {
        return 0.0;
    }
    point_segment_distance(a.p0, b)
        .min(point_segment_distance(a.p1, b))
        .min(point_segment_distance(b.p0, a))
        .min(point_segment_distance(b.p1, a))
}

fn point_segment_distance(p: Point, s: Segment) -> f64 {
    let d = s.p1.sub(s.p0);
    let len2 = d.x * d.x + d.y * d.y;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.x - s.p0.x) * d.x + (p.y - s.p0.y) * d.y) / len2).clamp(0.0, 1.0)
    };
    p.sub(s.p0.add_scaled(d, t)).norm()
}

fn clear_of(candidate: Segment, others: &[Segment]) -> bool {
    others.iter().all(|&o| segment_distance(candidate, o) >= CLEARANCE)
}

fn sample_non_crossing_pair(rng: &mut SeededRng) -> Option<Figure> {
    let a = random_segment(rng, MAX_PAIR_LEN);
    let b = random_segment(rng, MAX_PAIR_LEN);
    if ![a.p0, a.p1, b.p0, b.p1].into_iter().all(in_frame) || !clear_of(a, &[b]) {
        return None;
    }
    Some(Figure::NonCrossingPair { a, b })
}

fn sample_figure(rng: &mut SeededRng, kind: FigureKind) -> Option<Figure> {
    match kind {
        FigureKind::Angle => sample_angle(rng, ANGLE_RANGE),
        FigureKind::SharpAngle => sample_angle(rng, SHARP_RANGE),
        FigureKind::BluntAngle => sample_angle(rng, BLUNT_RANGE),
        FigureKind::Triangle | FigureKind::SharpTriangle | FigureKind::BluntTriangle => sample_triangle(rng, kind),
        FigureKind::CrossingPair => sample_crossing_pair(rng),
        FigureKind::NonCrossingPair => sample_non_crossing_pair(rng),
    }
}

fn sample_distractors(rng: &mut SeededRng, figure: &[Segment], count: usize) -> Option<Vec<Segment>> {
    let mut placed: Vec<Segment> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut found = None;
        for _ in 0..DISTRACTOR_TRIES {
            let s = random_segment(rng, MAX_PAIR_LEN);
            if in_frame(s.p0) && in_frame(s.p1) && clear_of(s, figure) && clear_of(s, &placed) {
                found = Some(s);
                break;
            }
        }
        placed.push(found?);
    }
    Some(placed)
}

/// Draws a random scene of class `label` for `task` by rejection sampling.
pub fn sample_scene(task: TaskId, label: u8, rng: &mut SeededRng) -> Result<Scene> {
    let kind = task.figure_kind(label)?;
    let polarity = if rng.bernoulli(0.5) {
        Polarity::WhiteOnDark
    } else {
        Polarity::BlackOnLight
    };
    let background_kind = rng.below(BACKGROUND_SPACINGS.len()) as u8;
    for _ in 0..MAX_ATTEMPTS {
        let Some(figure) = sample_figure(rng, kind) else {
            continue;
        };
        let Some(distractors) = sample_distractors(rng, &figure.segments(), task.distractors()) else {
            continue;
        };
        let scene = Scene {
            task,
            label,
            figures: vec![figure],
            distractors,
            polarity,
            background_kind,
        };
        if validate_scene(&scene).is_ok() {
            return Ok(scene);
        }
    }
    Err(Error::SamplingBudget {
        task: task.to_string(),
        label,
        attempts: MAX_ATTEMPTS,
    })
}

/// Why a scene failed [`validate_scene`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation(pub String);

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn fail<T>(msg: impl Into<String>) -> std::result::Result<T, Violation> {
    Err(Violation(msg.into()))
}

// The checks below deliberately avoid the sampler's helpers: amplitudes come
// from atan2 (angles) and the law of cosines (triangles), intersections from
// orientation predicates.

fn cross2(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn ray_amplitude(vertex: Point, a: Point, b: Point) -> f64 {
    let (ux, uy) = (a.x - vertex.x, a.y - vertex.y);
    let (vx, vy) = (b.x - vertex.x, b.y - vertex.y);
    (ux * vy - uy * vx).abs().atan2(ux * vx + uy * vy).to_degrees()
}

fn law_of_cosines(opposite: f64, s1: f64, s2: f64) -> f64 {
    ((s1 * s1 + s2 * s2 - opposite * opposite) / (2.0 * s1 * s2))
        .clamp(-1.0, 1.0)
        .acos()
        .to_degrees()
}

/// Proper crossing by orientation tests, with the parameters recovered by
/// projecting the crossing point onto each segment.
fn oracle_crossing(a: Segment, b: Segment) -> Option<(f64, f64)> {
    let d1 = cross2(b.p0, b.p1, a.p0);
    let d2 = cross2(b.p0, b.p1, a.p1);
    let d3 = cross2(a.p0, a.p1, b.p0);
    let d4 = cross2(a.p0, a.p1, b.p1);
    if !((d1 > 0.0) != (d2 > 0.0) && d1 != 0.0 && d2 != 0.0 && (d3 > 0.0) != (d4 > 0.0) && d3 != 0.0 && d4 != 0.0) {
        return None;
    }
    let t = d1 / (d1 - d2);
    let p = Point::new(a.p0.x + t * (a.p1.x - a.p0.x), a.p0.y + t * (a.p1.y - a.p0.y));
    let bl2 = (b.p1.x - b.p0.x).powi(2) + (b.p1.y - b.p0.y).powi(2);
    let u = ((p.x - b.p0.x) * (b.p1.x - b.p0.x) + (p.y - b.p0.y) * (b.p1.y - b.p0.y)) / bl2;
    Some((t, u))
}

fn oracle_distance(a: Segment, b: Segment) -> f64 {
    if oracle_crossing(a, b).is_some() {
        return 0.0;
    }
    let pd = |p: Point, s: Segment| {
        let (dx, dy) = (s.p1.x - s.p0.x, s.p1.y - s.p0.y);
        let l2 = dx * dx + dy * dy;
        let t = if l2 > 0.0 {
            (((p.x - s.p0.x) * dx + (p.y - s.p0.y) * dy) / l2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (p.x - s.p0.x - t * dx).hypot(p.y - s.p0.y - t * dy)
    };
    pd(a.p0, b).min(pd(a.p1, b)).min(pd(b.p0, a)).min(pd(b.p1, a))
}

fn check_range(what: &str, value: f64, range: (f64, f64)) -> std::result::Result<(), Violation> {
    if value < range.0 || value > range.1 {
        return fail(format!("{what} {value:.3}° outside [{}, {}]", range.0, range.1));
    }
    Ok(())
}

/// Re-checks every task constraint on `scene` from its raw coordinates.
pub fn validate_scene(scene: &Scene) -> std::result::Result<(), Violation> {
    let kind = scene
        .task
        .figure_kind(scene.label)
        .map_err(|e| Violation(e.to_string()))?;
    if scene.figures.len() != 1 {
        return fail(format!("expected one figure, found {}", scene.figures.len()));
    }
    if scene.distractors.len() != scene.task.distractors() {
        return fail(format!(
            "expected {} distractors, found {}",
            scene.task.distractors(),
            scene.distractors.len()
        ));
    }
    if scene.background_kind as usize >= BACKGROUND_SPACINGS.len() {
        return fail("unknown background kind");
    }
    let all = scene.segments();
    if !(2..=4).contains(&all.len()) {
        return fail(format!("{} segments in scene", all.len()));
    }
    for s in &all {
        for p in [s.p0, s.p1] {
            if !(p.x >= 0.0 && p.x < FRAME && p.y >= 0.0 && p.y < FRAME) {
                return fail(format!("point ({:.2}, {:.2}) outside the frame", p.x, p.y));
            }
        }
        let len = (s.p1.x - s.p0.x).hypot(s.p1.y - s.p0.y);
        if len < MIN_SEGMENT_LEN {
            return fail(format!("segment too short ({len:.2} px)"));
        }
    }

    let figure = &scene.figures[0];
    match (kind, figure) {
        (FigureKind::Angle | FigureKind::SharpAngle | FigureKind::BluntAngle, Figure::Angle { vertex, a, b }) => {
            let range = match kind {
                FigureKind::SharpAngle => SHARP_RANGE,
                FigureKind::BluntAngle => BLUNT_RANGE,
                _ => ANGLE_RANGE,
            };
            check_range("angle", ray_amplitude(*vertex, *a, *b), range)?;
        }
        (
            FigureKind::Triangle | FigureKind::SharpTriangle | FigureKind::BluntTriangle,
            Figure::Triangle { vertices },
        ) => {
            let [p, q, r] = *vertices;
            let pq = (q.x - p.x).hypot(q.y - p.y);
            let qr = (r.x - q.x).hypot(r.y - q.y);
            let rp = (p.x - r.x).hypot(p.y - r.y);
            let angles = [law_of_cosines(qr, pq, rp), law_of_cosines(rp, pq, qr), law_of_cosines(pq, qr, rp)];
            for a in angles {
                check_range("triangle angle", a, ANGLE_RANGE)?;
            }
            match kind {
                FigureKind::SharpTriangle => {
                    for a in angles {
                        check_range("sharp triangle angle", a, SHARP_RANGE)?;
                    }
                }
                FigureKind::BluntTriangle => {
                    let max = angles.iter().copied().fold(0.0, f64::max);
                    check_range("blunt triangle largest angle", max, BLUNT_RANGE)?;
                }
                _ => {}
            }
        }
        (FigureKind::CrossingPair, Figure::CrossingPair { a, b }) => {
            let Some((t1, t2)) = oracle_crossing(*a, *b) else {
                return fail("crossing pair does not cross");
            };
            let origin = Point::new(0.0, 0.0);
            let da = Point::new(a.p1.x - a.p0.x, a.p1.y - a.p0.y);
            let db = Point::new(b.p1.x - b.p0.x, b.p1.y - b.p0.y);
            check_range("crossing angle", ray_amplitude(origin, da, db), ANGLE_RANGE)?;
            for t in [t1, t2] {
                if t < CROSS_WINDOW.0 || t > CROSS_WINDOW.1 {
                    return fail(format!("crossing at {:.1}% of a segment", t * 100.0));
                }
            }
        }
        (FigureKind::NonCrossingPair, Figure::NonCrossingPair { a, b }) => {
            if oracle_distance(*a, *b) < CLEARANCE {
                return fail("non-crossing pair crosses or touches");
            }
        }
        (kind, _) => return fail(format!("figure does not match {kind:?}")),
    }

    let figure_segments = figure.segments();
    for (i, d) in scene.distractors.iter().enumerate() {
        if figure_segments.iter().any(|&f| oracle_distance(*d, f) < CLEARANCE) {
            return fail("distractor crosses figure");
        }
        if scene.distractors[..i].iter().any(|&o| oracle_distance(*d, o) < CLEARANCE) {
            return fail("distractors cross each other");
        }
    }
    Ok(())
}

/// Draws the scene's background and strokes; a pure function of `(scene, rng)`.
pub fn render(scene: &Scene, rng: &mut SeededRng) -> Stimulus {
    let side = IMAGE_SIDE;
    let spacing = BACKGROUND_SPACINGS[scene.background_kind as usize % BACKGROUND_SPACINGS.len()];
    let (band, ink) = match scene.polarity {
        Polarity::WhiteOnDark => (DARK_BAND, 1.0),
        Polarity::BlackOnLight => (LIGHT_BAND, 0.0),
    };
    // Value noise: uniform values on a lattice of spacing `spacing`, bilinearly
    // interpolated at pixel centres.
    let n = side / spacing + 1;
    let lattice: Vec<f64> = (0..n * n)
        .map(|_| rng.uniform(band.0, band.1).unwrap())
        .collect();
    let segments = scene.segments();
    let mut pixels = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let (u, v) = ((x as f64 + 0.5) / spacing as f64, (y as f64 + 0.5) / spacing as f64);
            let (i, j) = (u as usize, v as usize);
            let (fu, fv) = (u - i as f64, v - j as f64);
            let at = |i: usize, j: usize| lattice[j * n + i];
            let bg = (1.0 - fv) * ((1.0 - fu) * at(i, j) + fu * at(i + 1, j))
                + fv * ((1.0 - fu) * at(i, j + 1) + fu * at(i + 1, j + 1));
            let centre = Point::new(x as f64 + 0.5, y as f64 + 0.5);
            // Solid core, then a 1-px linear falloff.
            let coverage = segments
                .iter()
                .map(|&s| (STROKE_WIDTH / 2.0 + 0.5 - point_segment_distance(centre, s)).clamp(0.0, 1.0))
                .fold(0.0, f64::max);
            pixels.push((bg + (ink - bg) * coverage).clamp(0.0, 1.0));
        }
    }
    Stimulus {
        pixels,
        label: scene.label,
    }
}

/// Scene and image for the stimulus at `global_index` of a dataset seeded by
/// `seed`. Each index has its own streams, so any stimulus can be regenerated
/// alone.
pub fn generate_stimulus(task: TaskId, seed: u64, global_index: u64, label: u8) -> Result<(Scene, Stimulus)> {
    let mut scene_rng = SeededRng::derive(seed, &[global_index, 0]);
    let scene = sample_scene(task, label, &mut scene_rng)?;
    let mut render_rng = SeededRng::derive(seed, &[global_index, 1]);
    let stimulus = render(&scene, &mut render_rng);
    Ok((scene, stimulus))
}

/// Builds a class-balanced dataset. Labels alternate 0, 1, 0, … within each
/// split; stimuli are numbered consecutively across train, valid and test.
pub fn generate_dataset(task: TaskId, sizes: (usize, usize, usize), seed: u64) -> Result<LabeledDataset> {
    let (n_train, n_valid, n_test) = sizes;
    if n_train < 2 || n_valid < 2 || n_test < 2 {
        return Err(Error::InvalidArgument(format!(
            "every split needs at least 2 stimuli, got {n_train},{n_valid},{n_test}"
        )));
    }
    let pixels = IMAGE_SIDE * IMAGE_SIDE;
    let build = |offset: usize, n: usize| -> Result<Split> {
        let images: Vec<Vec<u8>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (_, stim) = generate_stimulus(task, seed, (offset + i) as u64, (i % 2) as u8)?;
                Ok(stim.pixels.iter().map(|&v| quantize(v)).collect())
            })
            .collect::<Result<_>>()?;
        let labels = (0..n).map(|i| (i % 2) as u8).collect();
        Split::new(pixels, images.concat(), labels)
    };
    Ok(LabeledDataset {
        task: task.to_string(),
        height: IMAGE_SIDE,
        width: IMAGE_SIDE,
        train: build(0, n_train)?,
        valid: build(n_train, n_valid)?,
        test: build(n_train + n_valid, n_test)?,
    })
}
