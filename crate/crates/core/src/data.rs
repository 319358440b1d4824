//! Raw scene ingestion, fixed-length windowing, leave-one-out splits and
//! negative (perturbed-future) sample synthesis.

use crate::error::{contract, Result, TpadError};
use crate::tensor::Matrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

pub mod synthetic;

pub const T_OBS: usize = 8;
pub const T_PRED: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub frame: i64,
    pub ped: i64,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawTrackTable {
    pub scene: String,
    pub rows: Vec<Observation>,
}

/// Field positions of frame, pedestrian, x and y on each line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnOrder {
    pub frame: usize,
    pub ped: usize,
    pub x: usize,
    pub y: usize,
}

impl Default for ColumnOrder {
    fn default() -> Self {
        Self {
            frame: 0,
            ped: 1,
            x: 2,
            y: 3,
        }
    }
}

impl ColumnOrder {
    /// Parse a descriptor such as `"frame ped x y"` or `"frame ped _ x _ y"`,
    /// where `_` marks an ignored field.
    pub fn parse(desc: &str) -> Result<Self> {
        let mut found: [Option<usize>; 4] = [None; 4];
        for (i, tok) in desc
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .enumerate()
        {
            let slot = match tok {
                "frame" => 0,
                "ped" | "pedestrian" | "id" => 1,
                "x" => 2,
                "y" => 3,
                "_" | "skip" => continue,
                other => return Err(TpadError::Config(format!("unknown column `{other}` in order `{desc}`"))),
            };
            if found[slot].replace(i).is_some() {
                return Err(TpadError::Config(format!("column `{tok}` repeated in order `{desc}`")));
            }
        }
        match found {
            [Some(frame), Some(ped), Some(x), Some(y)] => Ok(Self { frame, ped, x, y }),
            _ => Err(TpadError::Config(format!(
                "column order `{desc}` must name frame, ped, x and y"
            ))),
        }
    }

    fn width(&self) -> usize {
        self.frame.max(self.ped).max(self.x).max(self.y) + 1
    }
}

fn parse_integral(tok: &str, line: usize, what: &str) -> Result<i64> {
    let v: f64 = tok.parse().map_err(|_| TpadError::Parse {
        line,
        message: format!("{what} `{tok}` is not numeric"),
    })?;
    if !v.is_finite() || v.fract() != 0.0 {
        return Err(TpadError::Parse {
            line,
            message: format!("{what} `{tok}` is not an integer"),
        });
    }
    Ok(v as i64)
}

fn parse_coord(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok.parse().map_err(|_| TpadError::Parse {
        line,
        message: format!("coordinate `{tok}` is not numeric"),
    })?;
    if !v.is_finite() {
        return Err(TpadError::Parse {
            line,
            message: format!("coordinate `{tok}` is not finite"),
        });
    }
    Ok(v)
}

/// Parse scene text. Blank lines and `#` comments are skipped.
pub fn parse_raw_scene(text: &str, scene: &str, order: &ColumnOrder) -> Result<RawTrackTable> {
    let mut rows = Vec::new();
    let mut seen = HashMap::new();
    let need = order.width().max(4);
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .collect();
        if fields.len() < need {
            return Err(TpadError::Parse {
                line,
                message: format!("expected at least {need} fields, found {}", fields.len()),
            });
        }
        let obs = Observation {
            frame: parse_integral(fields[order.frame], line, "frame id")?,
            ped: parse_integral(fields[order.ped], line, "pedestrian id")?,
            x: parse_coord(fields[order.x], line)?,
            y: parse_coord(fields[order.y], line)?,
        };
        if let Some(prev) = seen.insert((obs.frame, obs.ped), line) {
            return Err(TpadError::Parse {
                line,
                message: format!(
                    "duplicate (frame {}, pedestrian {}) first seen on line {prev}",
                    obs.frame, obs.ped
                ),
            });
        }
        rows.push(obs);
    }
    if rows.is_empty() {
        return Err(TpadError::EmptyInput(format!("scene `{scene}` has no observations")));
    }
    Ok(RawTrackTable {
        scene: scene.to_string(),
        rows,
    })
}

pub fn load_raw_scene(path: &Path, order: &ColumnOrder) -> Result<RawTrackTable> {
    let text = std::fs::read_to_string(path)?;
    let scene = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scene".into());
    parse_raw_scene(&text, &scene, order)
}

impl RawTrackTable {
    /// Serialize in the default `frame ped x y` order. Coordinates use the
    /// shortest representation that parses back to the same `f64`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for o in &self.rows {
            out.push_str(&format!("{}\t{}\t{:?}\t{:?}\n", o.frame, o.ped, o.x, o.y));
        }
        out
    }

    pub fn pedestrian_ids(&self) -> BTreeSet<i64> {
        self.rows.iter().map(|o| o.ped).collect()
    }

    pub fn translated(&self, dx: f64, dy: f64) -> RawTrackTable {
        RawTrackTable {
            scene: self.scene.clone(),
            rows: self
                .rows
                .iter()
                .map(|o| Observation {
                    x: o.x + dx,
                    y: o.y + dy,
                    ..*o
                })
                .collect(),
        }
    }
}

/// One scene slice. Row `p` of `history` holds pedestrian `p`'s observed
/// positions `[x0, y0, x1, y1, ...]`; `future` likewise for predicted frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryWindow {
    pub scene: String,
    pub start_frame: i64,
    pub pedestrian_ids: Vec<i64>,
    pub history: Matrix,
    pub future: Matrix,
    pub t_obs: usize,
    pub t_pred: usize,
}

impl TrajectoryWindow {
    pub fn new(
        scene: impl Into<String>,
        start_frame: i64,
        pedestrian_ids: Vec<i64>,
        history: Matrix,
        future: Matrix,
    ) -> Result<Self> {
        let n = pedestrian_ids.len();
        if n == 0 {
            return Err(contract("window with no pedestrians"));
        }
        if history.rows() != n
            || future.rows() != n
            || !history.cols().is_multiple_of(2)
            || !future.cols().is_multiple_of(2)
        {
            return Err(contract(format!(
                "window shapes {:?}/{:?} inconsistent with {n} pedestrians",
                history.shape(),
                future.shape()
            )));
        }
        if !history.is_finite() || !future.is_finite() {
            return Err(contract("window contains non-finite coordinates"));
        }
        Ok(Self {
            scene: scene.into(),
            start_frame,
            pedestrian_ids,
            t_obs: history.cols() / 2,
            t_pred: future.cols() / 2,
            history,
            future,
        })
    }

    pub fn n(&self) -> usize {
        self.pedestrian_ids.len()
    }

    /// `N×2` last observed positions.
    pub fn last_observed(&self) -> Matrix {
        self.history.slice_cols(2 * (self.t_obs - 1), 2)
    }

    /// Copy with `future` replaced; used for negatives and candidate predictions.
    pub fn with_future(&self, future: Matrix) -> Self {
        assert_eq!(future.shape(), self.future.shape());
        Self { future, ..self.clone() }
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Cut every window of `t_obs + t_pred` consecutive frames, stepping start
/// offsets by `stride` frames. The frame step is the gcd of frame-id gaps, so
/// an ETH-style stride-10 file has the same frame timeline as a dense one.
pub fn window_scenes(
    table: &RawTrackTable,
    t_obs: usize,
    t_pred: usize,
    stride: usize,
) -> Result<Vec<TrajectoryWindow>> {
    if stride == 0 {
        return Err(contract("window stride must be at least 1"));
    }
    let frames: BTreeSet<i64> = table.rows.iter().map(|o| o.frame).collect();
    let (Some(&first), Some(&last)) = (frames.first(), frames.last()) else {
        return Ok(Vec::new());
    };
    let step = frames
        .iter()
        .zip(frames.iter().skip(1))
        .fold(0, |g, (a, b)| gcd(g, b - a))
        .max(1);
    let span = t_obs + t_pred;
    let timeline_len = ((last - first) / step + 1) as usize;
    if timeline_len < span {
        return Ok(Vec::new());
    }

    let mut positions: HashMap<(i64, i64), (f64, f64)> = HashMap::with_capacity(table.rows.len());
    let mut by_ped: BTreeMap<i64, BTreeSet<i64>> = BTreeMap::new();
    for o in &table.rows {
        positions.insert((o.frame, o.ped), (o.x, o.y));
        by_ped.entry(o.ped).or_default().insert(o.frame);
    }

    let mut windows = Vec::new();
    for offset in (0..=timeline_len - span).step_by(stride) {
        let start = first + offset as i64 * step;
        let frame_at = |k: usize| start + k as i64 * step;
        let ids: Vec<i64> = by_ped
            .iter()
            .filter(|(_, fs)| (0..span).all(|k| fs.contains(&frame_at(k))))
            .map(|(&p, _)| p)
            .collect();
        if ids.is_empty() {
            continue;
        }
        let coords = |p: i64, k: usize| positions[&(frame_at(k), p)];
        let history = Matrix::from_fn(ids.len(), 2 * t_obs, |i, j| {
            let (x, y) = coords(ids[i], j / 2);
            if j % 2 == 0 {
                x
            } else {
                y
            }
        });
        let future = Matrix::from_fn(ids.len(), 2 * t_pred, |i, j| {
            let (x, y) = coords(ids[i], t_obs + j / 2);
            if j % 2 == 0 {
                x
            } else {
                y
            }
        });
        windows.push(TrajectoryWindow::new(table.scene.clone(), start, ids, history, future)?);
    }
    Ok(windows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeWindow {
    /// Index of the positive window this was derived from.
    pub base: usize,
    pub perturbed_future: Matrix,
    pub noise_bound: f64,
}

/// One negative per window: every future coordinate shifted by an independent
/// draw from `U[-noise_bound, noise_bound]`.
pub fn make_negatives(windows: &[TrajectoryWindow], noise_bound: f64, seed: u64) -> Result<Vec<NegativeWindow>> {
    if !noise_bound.is_finite() || noise_bound <= 0.0 {
        return Err(contract(format!("noise bound must be positive, got {noise_bound}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(windows
        .iter()
        .enumerate()
        .map(|(base, w)| NegativeWindow {
            base,
            perturbed_future: w.future.map(|v| v + rng.random_range(-noise_bound..=noise_bound)),
            noise_bound,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub held_out_scene: String,
    pub train: Vec<TrajectoryWindow>,
    pub val: Vec<TrajectoryWindow>,
    pub val_neg: Vec<NegativeWindow>,
    /// Windows of the held-out scene, reserved for prediction filtering.
    pub test: Vec<TrajectoryWindow>,
}

impl DatasetSplit {
    pub fn negative_window(&self, k: usize) -> TrajectoryWindow {
        let neg = &self.val_neg[k];
        self.val[neg.base].with_future(neg.perturbed_future.clone())
    }
}

/// Pool all non-held-out windows, shuffle them with `seed`, and reserve the
/// last `round(val_fraction · n)` as validation. Negatives are built from
/// the validation windows with `noise_bound`.
pub fn leave_one_out_split(
    scenes: &BTreeMap<String, Vec<TrajectoryWindow>>,
    held_out: &str,
    val_fraction: f64,
    noise_bound: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if !scenes.contains_key(held_out) {
        return Err(TpadError::Config(format!(
            "held-out scene `{held_out}` not among {:?}",
            scenes.keys().collect::<Vec<_>>()
        )));
    }
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(TpadError::Config(format!(
            "val_fraction must lie in (0, 1), got {val_fraction}"
        )));
    }
    let mut pool: Vec<TrajectoryWindow> = scenes
        .iter()
        .filter(|(name, _)| name.as_str() != held_out)
        .flat_map(|(_, ws)| ws.iter().cloned())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    let n_val = (val_fraction * pool.len() as f64).round() as usize;
    let val = pool.split_off(pool.len() - n_val);
    let val_neg = make_negatives(&val, noise_bound, seed.wrapping_add(1))?;
    Ok(DatasetSplit {
        held_out_scene: held_out.to_string(),
        train: pool,
        val,
        val_neg,
        test: scenes[held_out].clone(),
    })
}

const CACHE_MAGIC: &[u8; 8] = b"TPADWIN\0";
pub const CACHE_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

/// Binary windows cache: magic, format version, window count, then per
/// window the scene name, start frame, shape `(N, t_obs, t_pred)`, ids and
/// little-endian `f64` history then future payloads.
pub fn encode_windows(windows: &[TrajectoryWindow]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CACHE_MAGIC);
    put_u32(&mut out, CACHE_VERSION);
    put_u32(&mut out, windows.len() as u32);
    for w in windows {
        put_u32(&mut out, w.scene.len() as u32);
        out.extend_from_slice(w.scene.as_bytes());
        out.extend_from_slice(&w.start_frame.to_le_bytes());
        put_u32(&mut out, w.n() as u32);
        put_u32(&mut out, w.t_obs as u32);
        put_u32(&mut out, w.t_pred as u32);
        for id in &w.pedestrian_ids {
            out.extend_from_slice(&id.to_le_bytes());
        }
        for v in w.history.data().iter().chain(w.future.data()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(TpadError::Format(format!(
                "truncated at byte {} (needed {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub(crate) fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub(crate) fn reader(buf: &[u8]) -> Reader<'_> {
    Reader { buf, pos: 0 }
}

pub fn decode_windows(buf: &[u8]) -> Result<Vec<TrajectoryWindow>> {
    let mut r = reader(buf);
    if r.take(8)? != CACHE_MAGIC {
        return Err(TpadError::Format("not a windows cache".into()));
    }
    let version = r.u32()?;
    if version != CACHE_VERSION {
        return Err(TpadError::Format(format!("unsupported cache version {version}")));
    }
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let scene = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| TpadError::Format("scene name is not UTF-8".into()))?;
        let start = r.i64()?;
        let n = r.u32()? as usize;
        let t_obs = r.u32()? as usize;
        let t_pred = r.u32()? as usize;
        let ids = (0..n).map(|_| r.i64()).collect::<Result<Vec<_>>>()?;
        let hist = (0..n * t_obs * 2).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let fut = (0..n * t_pred * 2).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        out.push(
            TrajectoryWindow::new(
                scene,
                start,
                ids,
                Matrix::from_vec(n, t_obs * 2, hist),
                Matrix::from_vec(n, t_pred * 2, fut),
            )
            .map_err(|e| TpadError::Format(e.to_string()))?,
        );
    }
    if r.pos != buf.len() {
        return Err(TpadError::Format(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok(out)
}

pub fn save_windows(path: &Path, windows: &[TrajectoryWindow]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_windows(windows))?;
    Ok(())
}

pub fn load_windows(path: &Path) -> Result<Vec<TrajectoryWindow>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    decode_windows(&buf)
}

impl Reader<'_> {
    pub(crate) fn at_end(&self) -> bool {
        self.pos == self.buf.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn order() -> ColumnOrder {
        ColumnOrder::default()
    }

    fn track(ped: i64, frames: std::ops::Range<i64>) -> Vec<Observation> {
        frames
            .map(|f| Observation {
                frame: f,
                ped,
                x: f as f64 * 0.5,
                y: ped as f64 - f as f64 * 0.1,
            })
            .collect()
    }

    #[test]
    fn parses_two_rows() {
        let t = parse_raw_scene("0 1 0.0 0.0\n10 1 1.0 1.0\n", "s", &order()).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[1].frame, 10);
        assert_eq!(t.pedestrian_ids().len(), 1);
    }

    #[test]
    fn rejects_nan_and_reports_line() {
        let err = parse_raw_scene("# header\n0 1 nan 0.0\n", "s", &order()).unwrap_err();
        assert!(matches!(err, TpadError::Parse { line: 2, .. }), "{err:?}");
        let err = parse_raw_scene("0 1 0.0\n", "s", &order()).unwrap_err();
        assert!(matches!(err, TpadError::Parse { line: 1, .. }));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            parse_raw_scene("# only a comment\n\n", "s", &order()),
            Err(TpadError::EmptyInput(_))
        ));
    }

    #[test]
    fn duplicate_frame_pedestrian_rejected() {
        let err = parse_raw_scene("0 1 0 0\n0 1 1 1\n", "s", &order()).unwrap_err();
        assert!(matches!(err, TpadError::Parse { line: 2, .. }));
    }

    #[test]
    fn column_order_descriptor() {
        let o = ColumnOrder::parse("ped frame _ y x").unwrap();
        assert_eq!(
            o,
            ColumnOrder {
                frame: 1,
                ped: 0,
                x: 4,
                y: 3
            }
        );
        let t = parse_raw_scene("7 3 99 2.5 1.5\n", "s", &o).unwrap();
        assert_eq!(
            t.rows[0],
            Observation {
                frame: 3,
                ped: 7,
                x: 1.5,
                y: 2.5
            }
        );
        assert!(ColumnOrder::parse("frame ped x").is_err());
    }

    #[test]
    fn eth_style_fixture_counts_pedestrians() {
        let mut text = String::new();
        for k in 0..20 {
            for p in 1..=3 {
                text.push_str(&format!("{}.0\t{p}.0\t{}\t{}\n", k * 10, k as f64 * 0.4, p as f64));
            }
        }
        let t = parse_raw_scene(&text, "eth", &order()).unwrap();
        assert_eq!(t.pedestrian_ids().len(), 3);
        let w = window_scenes(&t, T_OBS, T_PRED, 1).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].n(), 3);
    }

    #[test]
    fn exact_fit_gives_one_window() {
        let t = RawTrackTable {
            scene: "s".into(),
            rows: track(1, 0..20),
        };
        let w = window_scenes(&t, T_OBS, T_PRED, 1).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].n(), 1);
        assert_eq!(w[0].history.get(0, 0), 0.0);
        assert_eq!(w[0].future.get(0, 0), 4.0);
    }

    #[test]
    fn twenty_five_frames_give_six_windows() {
        let t = RawTrackTable {
            scene: "s".into(),
            rows: track(1, 0..25),
        };
        let w = window_scenes(&t, T_OBS, T_PRED, 1).unwrap();
        let starts: Vec<i64> = w.iter().map(|w| w.start_frame).collect();
        assert_eq!(starts, (0..=5).collect::<Vec<_>>());
        assert_eq!(window_scenes(&t, T_OBS, T_PRED, 2).unwrap().len(), 3);
    }

    #[test]
    fn partial_presence_excluded() {
        let mut rows = track(1, 0..20);
        rows.extend(track(2, 0..10));
        let w = window_scenes(
            &RawTrackTable {
                scene: "s".into(),
                rows,
            },
            T_OBS,
            T_PRED,
            1,
        )
        .unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].pedestrian_ids, vec![1]);
    }

    #[test]
    fn zero_stride_rejected() {
        let t = RawTrackTable {
            scene: "s".into(),
            rows: track(1, 0..20),
        };
        assert!(window_scenes(&t, T_OBS, T_PRED, 0).is_err());
    }

    #[test]
    fn negatives_bounded_and_seeded() {
        let t = RawTrackTable {
            scene: "s".into(),
            rows: track(1, 0..200),
        };
        let w = window_scenes(&t, T_OBS, T_PRED, 1).unwrap();
        let negs = make_negatives(&w, 0.1, 7).unwrap();
        let mut count = 0;
        for n in &negs {
            let base = &w[n.base];
            assert_eq!(base.history, w[n.base].history);
            let d = n.perturbed_future.max_abs_diff(&base.future);
            assert!(d <= 0.1 && d > 0.0);
            count += n.perturbed_future.len();
        }
        assert!(count >= 4000);
        assert_eq!(negs, make_negatives(&w, 0.1, 7).unwrap());
        let other = make_negatives(&w, 0.1, 8).unwrap();
        assert_ne!(negs[0].perturbed_future, other[0].perturbed_future);
        assert!(make_negatives(&w, 0.0, 1).is_err());
    }

    #[test]
    fn negative_noise_is_symmetric() {
        let t = RawTrackTable {
            scene: "s".into(),
            rows: track(1, 0..4200),
        };
        let w = window_scenes(&t, T_OBS, T_PRED, 1).unwrap();
        let negs = make_negatives(&w, 0.1, 3).unwrap();
        let mut sum = 0.0;
        let mut n = 0usize;
        let mut max = 0.0f64;
        for neg in &negs {
            for (a, b) in neg.perturbed_future.data().iter().zip(w[neg.base].future.data()) {
                sum += a - b;
                max = max.max((a - b).abs());
                n += 1;
            }
        }
        assert!(n >= 100_000);
        assert!((sum / n as f64).abs() < 0.005);
        assert!(max <= 0.1);
    }

    fn scenes() -> BTreeMap<String, Vec<TrajectoryWindow>> {
        let mut m = BTreeMap::new();
        for (k, name) in ["ETH", "HOTEL", "UNIV", "ZARA1", "ZARA2"].iter().enumerate() {
            let t = RawTrackTable {
                scene: name.to_string(),
                rows: track(k as i64, 0..44),
            };
            m.insert(name.to_string(), window_scenes(&t, T_OBS, T_PRED, 1).unwrap());
        }
        m
    }

    #[test]
    fn split_excludes_held_out_and_is_deterministic() {
        let s = scenes();
        let split = leave_one_out_split(&s, "ETH", 0.2, 0.1, 5).unwrap();
        assert!(split.train.iter().chain(&split.val).all(|w| w.scene != "ETH"));
        assert!(split.test.iter().all(|w| w.scene == "ETH"));
        assert_eq!(split.train.len() + split.val.len(), 100);
        assert_eq!(split.val.len(), 20);
        assert_eq!(split.train.len(), 80);
        assert!(split.val_neg.iter().all(|n| n.base < split.val.len()));
        assert_eq!(split, leave_one_out_split(&s, "ETH", 0.2, 0.1, 5).unwrap());
        assert!(matches!(
            leave_one_out_split(&s, "NOPE", 0.2, 0.1, 5),
            Err(TpadError::Config(_))
        ));
        assert!(leave_one_out_split(&s, "ETH", 1.0, 0.1, 5).is_err());
    }

    #[test]
    fn cache_roundtrip_and_truncation() {
        let s = scenes();
        let all: Vec<_> = s.values().flatten().cloned().collect();
        let bytes = encode_windows(&all);
        assert_eq!(decode_windows(&bytes).unwrap(), all);
        assert!(matches!(
            decode_windows(&bytes[..bytes.len() - 3]),
            Err(TpadError::Format(_))
        ));
    }
}
