//! Plain-text artifact formats.
//!
//! Every file starts with `# key = value` metadata lines, followed by a
//! `header` line describing the domain and then whitespace-separated rows.
//! Floats are written with 17 significant digits and read back bit-exactly.
//!
//! Snapshot rows are `S id x_1 .. x_d` and `P id x_1 .. x_d`; the frozen
//! exterior of a ball container uses `XS` and `XP`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::diagnostics::PackingPoint;
use crate::dynamics::TrajectoryRecord;
use crate::geometry::{BallKind, Container, GeometryError, PointSet, SimulationDomain, TwoTypeConfiguration};
use crate::report::format_f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn parse_err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse {
        line,
        message: message.into(),
    }
}

/// Metadata lines shared by all artifacts.
pub type Meta = [(String, String)];

fn write_meta(out: &mut String, meta: &Meta) {
    for (k, v) in meta {
        let _ = writeln!(out, "# {k} = {v}");
    }
}

fn container_text(c: &Container) -> String {
    match c {
        Container::Open => "open".into(),
        Container::Ball { radius, .. } => format!("ball:{}", format_f64(*radius)),
        Container::Periodic { sides } => {
            let s: Vec<String> = sides.iter().map(|&l| format_f64(l)).collect();
            format!("periodic:{}", s.join(","))
        }
    }
}

fn domain_header(dom: &SimulationDomain) -> String {
    format!(
        "header dim={} sphere_radius={} particle_radius={} sigma={} container={}",
        dom.dim(),
        format_f64(dom.sphere_radius()),
        format_f64(dom.particle_radius()),
        format_f64(dom.sigma()),
        container_text(dom.container())
    )
}

fn write_rows(out: &mut String, tag: &str, set: &PointSet) {
    for (id, x) in set.iter() {
        out.push_str(tag);
        let _ = write!(out, " {id}");
        for v in x {
            out.push(' ');
            out.push_str(&format_f64(*v));
        }
        out.push('\n');
    }
}

/// Snapshot text for `config` in `dom`.
pub fn render_snapshot(dom: &SimulationDomain, config: &TwoTypeConfiguration, meta: &Meta) -> String {
    let mut out = String::new();
    write_meta(&mut out, meta);
    out.push_str(&domain_header(dom));
    out.push('\n');
    write_rows(&mut out, "S", &config.spheres);
    write_rows(&mut out, "P", &config.particles);
    if let Some(ext) = dom.exterior() {
        write_rows(&mut out, "XS", &ext.spheres);
        write_rows(&mut out, "XP", &ext.particles);
    }
    out
}

/// Parsed snapshot file.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub meta: Vec<(String, String)>,
    pub domain: SimulationDomain,
    pub config: TwoTypeConfiguration,
}

fn parse_f64(tok: &str, line: usize) -> Result<f64, FormatError> {
    tok.parse::<f64>().map_err(|_| parse_err(line, format!("bad number {tok:?}")))
}

struct Header {
    dim: usize,
    rs: f64,
    rp: f64,
    sigma: f64,
    container: String,
}

fn parse_header(text: &str, line: usize) -> Result<Header, FormatError> {
    let mut fields = text.split_whitespace();
    if fields.next() != Some("header") {
        return Err(parse_err(line, "expected a header line"));
    }
    let mut dim = None;
    let mut rs = None;
    let mut rp = None;
    let mut sigma = None;
    let mut container = None;
    for f in fields {
        let (k, v) = f.split_once('=').ok_or_else(|| parse_err(line, format!("bad field {f:?}")))?;
        match k {
            "dim" => dim = Some(v.parse::<usize>().map_err(|_| parse_err(line, "bad dim"))?),
            "sphere_radius" => rs = Some(parse_f64(v, line)?),
            "particle_radius" => rp = Some(parse_f64(v, line)?),
            "sigma" => sigma = Some(parse_f64(v, line)?),
            "container" => container = Some(v.to_string()),
            _ => {}
        }
    }
    let missing = |what: &str| parse_err(line, format!("header lacks {what}"));
    Ok(Header {
        dim: dim.ok_or_else(|| missing("dim"))?,
        rs: rs.ok_or_else(|| missing("sphere_radius"))?,
        rp: rp.ok_or_else(|| missing("particle_radius"))?,
        sigma: sigma.ok_or_else(|| missing("sigma"))?,
        container: container.ok_or_else(|| missing("container"))?,
    })
}

fn parse_row(text: &str, dim: usize, line: usize) -> Result<(String, u64, Vec<f64>), FormatError> {
    let toks: Vec<&str> = text.split_whitespace().collect();
    if toks.len() != dim + 2 {
        return Err(parse_err(line, format!("expected {} fields, got {}", dim + 2, toks.len())));
    }
    let id = toks[1].parse::<u64>().map_err(|_| parse_err(line, "bad id"))?;
    let x = toks[2..].iter().map(|t| parse_f64(t, line)).collect::<Result<Vec<_>, _>>()?;
    Ok((toks[0].to_string(), id, x))
}

fn split_meta(text: &str) -> (Vec<(String, String)>, Vec<(usize, &str)>) {
    let mut meta = Vec::new();
    let mut body = Vec::new();
    for (i, l) in text.lines().enumerate() {
        let t = l.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(m) = t.strip_prefix('#') {
            if let Some((k, v)) = m.split_once('=') {
                meta.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        body.push((i + 1, t));
    }
    (meta, body)
}

fn build_domain(h: &Header, exterior: TwoTypeConfiguration, line: usize) -> Result<SimulationDomain, FormatError> {
    let container = if h.container == "open" {
        Container::Open
    } else if let Some(r) = h.container.strip_prefix("ball:") {
        Container::Ball {
            radius: parse_f64(r, line)?,
            exterior,
        }
    } else if let Some(s) = h.container.strip_prefix("periodic:") {
        Container::Periodic {
            sides: s.split(',').map(|t| parse_f64(t, line)).collect::<Result<_, _>>()?,
        }
    } else {
        return Err(parse_err(line, format!("unknown container {:?}", h.container)));
    };
    Ok(SimulationDomain::new(h.dim, h.rs, h.rp, h.sigma, container)?)
}

pub fn parse_snapshot(text: &str) -> Result<Snapshot, FormatError> {
    let (meta, body) = split_meta(text);
    let (hl, ht) = *body.first().ok_or_else(|| parse_err(1, "empty snapshot"))?;
    let h = parse_header(ht, hl)?;
    let mut config = TwoTypeConfiguration::empty(h.dim);
    let mut exterior = TwoTypeConfiguration::empty(h.dim);
    for &(line, t) in &body[1..] {
        let (tag, id, x) = parse_row(t, h.dim, line)?;
        let set = match tag.as_str() {
            "S" => &mut config.spheres,
            "P" => &mut config.particles,
            "XS" => &mut exterior.spheres,
            "XP" => &mut exterior.particles,
            _ => return Err(parse_err(line, format!("unknown row type {tag:?}"))),
        };
        if set.index_of(id).is_some() {
            return Err(parse_err(line, format!("duplicate id {id}")));
        }
        set.push(id, &x);
    }
    if !h.container.starts_with("ball:") && !(exterior.spheres.is_empty() && exterior.particles.is_empty()) {
        return Err(parse_err(hl, "exterior rows need a ball container"));
    }
    let domain = build_domain(&h, exterior, hl)?;
    Ok(Snapshot { meta, domain, config })
}

/// Trajectory text: one `frame t=..` block per sample. The integrator
/// settings go on the header line.
pub fn render_trajectory(record: &TrajectoryRecord, meta: &Meta) -> String {
    let mut out = String::new();
    write_meta(&mut out, meta);
    let s = &record.settings;
    let _ = writeln!(
        out,
        "{} step={} max_sweeps={} tolerance={} seed={} scheme={:?} max_sweeps_used={}",
        domain_header(&record.domain),
        format_f64(s.step),
        s.max_sweeps,
        format_f64(s.tolerance),
        s.seed,
        s.scheme,
        record.max_sweeps_used
    );
    for (t, f) in record.times.iter().zip(&record.frames) {
        let _ = writeln!(out, "frame t={}", format_f64(*t));
        write_rows(&mut out, "S", &f.spheres);
        write_rows(&mut out, "P", &f.particles);
    }
    out
}

/// Sample times and frames read back from [`render_trajectory`] output.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryFile {
    pub meta: Vec<(String, String)>,
    /// Domain from the header; a ball container comes back without exterior.
    pub domain: SimulationDomain,
    pub times: Vec<f64>,
    pub frames: Vec<TwoTypeConfiguration>,
}

pub fn parse_trajectory(text: &str) -> Result<TrajectoryFile, FormatError> {
    let (meta, body) = split_meta(text);
    let (hl, ht) = *body.first().ok_or_else(|| parse_err(1, "empty trajectory"))?;
    let h = parse_header(ht, hl)?;
    let mut times = Vec::new();
    let mut frames: Vec<TwoTypeConfiguration> = Vec::new();
    for &(line, t) in &body[1..] {
        if let Some(v) = t.strip_prefix("frame t=") {
            times.push(parse_f64(v.trim(), line)?);
            frames.push(TwoTypeConfiguration::empty(h.dim));
            continue;
        }
        let frame = frames.last_mut().ok_or_else(|| parse_err(line, "row before the first frame"))?;
        let (tag, id, x) = parse_row(t, h.dim, line)?;
        match tag.as_str() {
            "S" => frame.spheres.push(id, &x),
            "P" => frame.particles.push(id, &x),
            _ => return Err(parse_err(line, format!("unknown row type {tag:?}"))),
        }
    }
    Ok(TrajectoryFile {
        meta,
        domain: build_domain(&h, TwoTypeConfiguration::empty(h.dim), hl)?,
        times,
        frames,
    })
}

/// Ledger snapshots: rows `t kind a b value` for every nonzero entry.
pub fn render_ledger(record: &TrajectoryRecord, meta: &Meta) -> String {
    let mut out = String::new();
    write_meta(&mut out, meta);
    out.push_str("# columns: t kind a b local_time\n");
    for (t, l) in record.times.iter().zip(&record.ledgers) {
        for (kind, a, b, v) in l.entries() {
            let _ = writeln!(out, "{} {} {a} {b} {}", format_f64(*t), kind.tag(), format_f64(v));
        }
    }
    out
}

/// Packing curve rows `z_s z_p intensity stderr ratio`.
pub fn render_curve(points: &[PackingPoint], meta: &Meta) -> String {
    let mut out = String::new();
    write_meta(&mut out, meta);
    out.push_str("# columns: sphere_activity particle_activity intensity stderr ratio\n");
    for p in points {
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            format_f64(p.sphere_activity),
            format_f64(p.particle_activity),
            format_f64(p.intensity.mean),
            format_f64(p.intensity.std_error),
            p.ratio.map(format_f64).unwrap_or_else(|| "nan".into())
        );
    }
    out
}

/// Ball kind for a row tag.
pub fn kind_of(tag: &str) -> Option<BallKind> {
    match tag {
        "S" => Some(BallKind::Sphere),
        "P" => Some(BallKind::Particle),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{run, DynamicsModel, IntegratorSettings, Scheme};
    use proptest::prelude::*;

    fn meta() -> Vec<(String, String)> {
        vec![("config_hash".into(), "abc".into()), ("seed".into(), "7".into())]
    }

    #[test]
    fn snapshot_round_trip_with_exterior() {
        let ext = TwoTypeConfiguration::new(
            PointSet::from_points(2, &[[5.5, 0.0]]).unwrap(),
            PointSet::from_points(2, &[[0.0, -5.2]]).unwrap(),
        )
        .unwrap();
        let dom = SimulationDomain::new(2, 0.5, 0.075, 1.3, Container::Ball { radius: 5.0, exterior: ext }).unwrap();
        let mut spheres = PointSet::new(2);
        spheres.push(4, &[0.1, 1.0 / 3.0]);
        spheres.push(9, &[-2.0, 1e-300]);
        let mut particles = PointSet::new(2);
        particles.push(2, &[std::f64::consts::PI, -0.7]);
        let config = TwoTypeConfiguration::new(spheres, particles).unwrap();
        let text = render_snapshot(&dom, &config, &meta());
        assert!(text.starts_with("# config_hash = abc\n# seed = 7\nheader dim=2"));
        let back = parse_snapshot(&text).unwrap();
        assert_eq!(back.domain, dom);
        assert_eq!(back.config, config);
        assert_eq!(back.meta, meta());
        assert_eq!(render_snapshot(&back.domain, &back.config, &back.meta), text);
    }

    #[test]
    fn malformed_snapshots() {
        assert!(parse_snapshot("").is_err());
        assert!(parse_snapshot("header dim=2 sphere_radius=0.5 particle_radius=0.1 sigma=1 container=open\nS 0 1.0\n").is_err());
        assert!(parse_snapshot("header dim=2 sphere_radius=0.5 particle_radius=0.1 sigma=1 container=open\nQ 0 1 2\n").is_err());
        assert!(parse_snapshot("header dim=2 sphere_radius=0.5 particle_radius=0.1 sigma=1 container=open\nS 0 1 2\nS 0 3 4\n").is_err());
        assert!(parse_snapshot("header dim=2 sphere_radius=0.5 particle_radius=0.6 sigma=1 container=open\n").is_err());
        let ok = parse_snapshot("header dim=1 sphere_radius=0.5 particle_radius=0.1 sigma=1 container=periodic:4\nP 3 0.25\n").unwrap();
        assert_eq!(ok.config.particles.get(0), &[0.25]);
    }

    #[test]
    fn trajectory_and_ledger_files() {
        let dom = SimulationDomain::new(2, 0.5, 0.075, 1.0, Container::Periodic { sides: vec![4.0, 4.0] }).unwrap();
        let init = TwoTypeConfiguration::new(
            PointSet::from_points(2, &[[1.0, 1.0], [2.001, 1.0]]).unwrap(),
            PointSet::from_points(2, &[[3.0, 3.0]]).unwrap(),
        )
        .unwrap();
        let mut s = IntegratorSettings::defaults(&dom, Scheme::TwoTypePenalised, 5);
        s.step = 1e-3;
        let rec = run(&init, &dom, &DynamicsModel::TwoType { field: None }, &s, 0.05, 10).unwrap();
        let text = render_trajectory(&rec, &meta());
        let back = parse_trajectory(&text).unwrap();
        assert_eq!(back.domain, dom);
        assert_eq!(back.times, rec.times);
        assert_eq!(back.frames, rec.frames);
        let ledger = render_ledger(&rec, &meta());
        assert!(ledger.starts_with("# config_hash = abc"));
        let rows = ledger.lines().filter(|l| !l.starts_with('#')).count();
        let expected: usize = rec.ledgers.iter().map(|l| l.entries().count()).sum();
        assert_eq!(rows, expected);
    }

    proptest! {
        #[test]
        fn coordinates_round_trip_bit_exactly(xs in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..20)) {
            let dom = SimulationDomain::new(1, 0.5, 0.1, 1.0, Container::Open).unwrap();
            let mut ps = PointSet::new(1);
            for (i, x) in xs.iter().enumerate() {
                ps.push(i as u64, &[*x]);
            }
            let config = TwoTypeConfiguration::new(PointSet::new(1), ps).unwrap();
            let back = parse_snapshot(&render_snapshot(&dom, &config, &[])).unwrap();
            for (a, b) in back.config.particles.coords().iter().zip(config.particles.coords()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
