//! Campaign file parsing. The file is TOML; the accepted sections and keys
//! are listed in `docs/reports.md`. Unknown keys are errors.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::netem::LinkProfile;
use crate::radio::{
    CoverageThresholds, LinkBudget, NodeRole, PropagationParams, RadioNode, RasterSpec,
};
use crate::telemetry::{FlowSpec, PlanBound, PlanConfig, RecordKind, SECOND_US};
use crate::iec::MessageClass;
use crate::transport::TransportRole;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("syntax error on line {line}: {message}")]
    SyntaxError { line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("missing required: {}", .0.join(", "))]
    MissingRequired(Vec<String>),
}

fn invalid(key: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Virtual,
    Sockets,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Isolated,
    Simultaneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Throughput,
    Echo,
    Application,
}

macro_rules! named_enum {
    ($ty:ident { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($ty::$variant => $name),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    other => Err(format!(
                        "{other:?} is not one of {}",
                        [$($name),+].join(", ")
                    )),
                }
            }
        }
    };
}

named_enum!(Backend { Virtual => "virtual", Sockets => "sockets" });
named_enum!(Scenario { Isolated => "isolated", Simultaneous => "simultaneous" });
named_enum!(Phase { Throughput => "throughput", Echo => "echo", Application => "application" });

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Throughput, Phase::Echo, Phase::Application];

    /// Short flag letter: `t`, `e` or `a`.
    pub fn from_letter(s: &str) -> Option<Phase> {
        match s {
            "t" => Some(Phase::Throughput),
            "e" => Some(Phase::Echo),
            "a" => Some(Phase::Application),
            _ => s.parse().ok(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkDirection {
    Up,
    Down,
}

named_enum!(LinkDirection { Up => "up", Down => "down" });

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HubConfig {
    pub name: String,
    pub x_m: f64,
    pub y_m: f64,
    pub height_m: f64,
    pub tx_power_dbm: f64,
    pub gain_dbi: f64,
    /// Address the sockets backend binds to.
    pub host: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeConfig {
    pub name: String,
    /// Inverter number for nodes that emit telemetry.
    pub source_id: Option<u16>,
    pub active: bool,
    pub x_m: f64,
    pub y_m: f64,
    pub height_m: f64,
    pub tx_power_dbm: f64,
    pub gain_dbi: f64,
    pub link: LinkProfile,
    /// Loss probability the link was calibrated to, if any.
    pub target_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadioConfig {
    pub budget: LinkBudget<f64>,
    pub band40: bool,
    pub raster: RasterSpec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanSettings {
    pub bound: PlanBoundSetting,
    pub jitter_ms: f64,
    pub override_range: bool,
    pub periods_s: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanBoundSetting {
    DurationS(f64),
    Count(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeConfig {
    pub count: u64,
    pub interval_ms: f64,
    pub pad_bytes: usize,
    pub timeout_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputConfig {
    pub duration_s: f64,
    /// Frame size on the emulated link, headers included.
    pub frame_bytes: usize,
    /// Write size on the sockets backend.
    pub stream_write_bytes: usize,
    pub window_ms: f64,
    pub directions: Vec<LinkDirection>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamConfig {
    /// Fixed retransmission timeout; derived from the link when absent.
    pub rto_ms: Option<f64>,
    pub max_retries: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Thresholds {
    pub max_tcp_loss_pct: Option<f64>,
    pub max_udp_loss_pct: Option<f64>,
    pub max_rtt_avg_ms: Option<f64>,
    pub min_throughput_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignConfig {
    pub name: String,
    pub seed: u64,
    pub backend: Backend,
    pub scenario: Scenario,
    pub phases: Vec<Phase>,
    pub transports: Vec<TransportRole>,
    pub trace: bool,
    pub uplink_capacity_bps: Option<f64>,
    pub radio: RadioConfig,
    pub hub: HubConfig,
    pub nodes: Vec<NodeConfig>,
    pub plan: PlanSettings,
    pub probe: ProbeConfig,
    pub throughput: ThroughputConfig,
    pub stream: StreamConfig,
    pub thresholds: Thresholds,
}

/// Key lookups over one TOML table that remember which keys were read.
struct Section<'a> {
    path: String,
    map: &'a toml::Table,
    used: BTreeSet<&'a str>,
}

impl<'a> Section<'a> {
    fn new(path: impl Into<String>, map: &'a toml::Table) -> Self {
        Self {
            path: path.into(),
            map,
            used: BTreeSet::new(),
        }
    }

    fn key(&self, k: &str) -> String {
        if self.path.is_empty() {
            k.to_owned()
        } else {
            format!("{}.{k}", self.path)
        }
    }

    fn raw(&mut self, k: &str) -> Option<&'a toml::Value> {
        let (name, v) = self.map.get_key_value(k)?;
        self.used.insert(name.as_str());
        Some(v)
    }

    fn f64(&mut self, k: &str) -> Result<Option<f64>, ConfigError> {
        match self.raw(k) {
            None => Ok(None),
            Some(toml::Value::Float(f)) if f.is_finite() => Ok(Some(*f)),
            Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(invalid(self.key(k), "expected a finite number")),
        }
    }

    fn f64_or(&mut self, k: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.f64(k)?.unwrap_or(default))
    }

    fn u64(&mut self, k: &str) -> Result<Option<u64>, ConfigError> {
        match self.raw(k) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(_) => Err(invalid(self.key(k), "expected a non-negative integer")),
        }
    }

    fn bool_or(&mut self, k: &str, default: bool) -> Result<bool, ConfigError> {
        match self.raw(k) {
            None => Ok(default),
            Some(toml::Value::Boolean(b)) => Ok(*b),
            Some(_) => Err(invalid(self.key(k), "expected true or false")),
        }
    }

    fn str(&mut self, k: &str) -> Result<Option<&'a str>, ConfigError> {
        match self.raw(k) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s.as_str())),
            Some(_) => Err(invalid(self.key(k), "expected a string")),
        }
    }

    fn parsed<T: FromStr<Err = String>>(&mut self, k: &str) -> Result<Option<T>, ConfigError> {
        match self.str(k)? {
            None => Ok(None),
            Some(s) => s.parse().map(Some).map_err(|e| invalid(self.key(k), e)),
        }
    }

    fn list<T>(&mut self, k: &str, f: impl Fn(&toml::Value) -> Result<T, String>) -> Result<Option<Vec<T>>, ConfigError> {
        match self.raw(k) {
            None => Ok(None),
            Some(toml::Value::Array(items)) => items
                .iter()
                .map(|v| f(v).map_err(|e| invalid(self.key(k), e)))
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(_) => Err(invalid(self.key(k), "expected a list")),
        }
    }

    fn table(&mut self, k: &str) -> Result<Option<Section<'a>>, ConfigError> {
        match self.raw(k) {
            None => Ok(None),
            Some(toml::Value::Table(t)) => Ok(Some(Section::new(self.key(k), t))),
            Some(_) => Err(invalid(self.key(k), "expected a section")),
        }
    }

    fn tables(&mut self, k: &str) -> Result<Vec<Section<'a>>, ConfigError> {
        match self.raw(k) {
            None => Ok(Vec::new()),
            Some(toml::Value::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(i, v)| match v {
                    toml::Value::Table(t) => Ok(Section::new(format!("{}[{i}]", self.key(k)), t)),
                    _ => Err(invalid(self.key(k), "expected [[section]] entries")),
                })
                .collect(),
            Some(toml::Value::Table(_)) => Err(invalid(self.key(k), "use [[node]] for each node")),
            Some(_) => Err(invalid(self.key(k), "expected [[section]] entries")),
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.map.keys().find(|k| !self.used.contains(k.as_str())) {
            Some(k) => Err(ConfigError::UnknownKey(self.key(k))),
            None => Ok(()),
        }
    }
}

fn syntax_line(text: &str, err: &toml::de::Error) -> usize {
    err.span()
        .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
        .unwrap_or(1)
}

fn positive(key: String, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(key, "must be positive"))
    }
}

impl FromStr for CampaignConfig {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        parse_config(s)
    }
}

/// Strict parse of a campaign file.
pub fn parse_config(text: &str) -> Result<CampaignConfig, ConfigError> {
    let root: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::SyntaxError {
        line: syntax_line(text, &e),
        message: e.message().to_owned(),
    })?;
    let mut top = Section::new("", &root);

    let campaign = top.table("campaign")?;
    let hub_sec = top.table("hub")?;
    let node_secs = top.tables("node")?;
    let missing: Vec<String> = [
        ("campaign", campaign.is_none()),
        ("hub", hub_sec.is_none()),
        ("node", node_secs.is_empty()),
    ]
    .iter()
    .filter(|(_, absent)| *absent)
    .map(|(n, _)| n.to_string())
    .collect();
    if !missing.is_empty() {
        return Err(ConfigError::MissingRequired(missing));
    }
    let (Some(mut campaign), Some(mut hub_sec)) = (campaign, hub_sec) else {
        unreachable!("checked above")
    };

    let name = campaign.str("name")?.unwrap_or("campaign").to_owned();
    let seed = campaign
        .u64("seed")?
        .ok_or_else(|| ConfigError::MissingRequired(vec!["campaign.seed".into()]))?;
    let backend = campaign.parsed("backend")?.unwrap_or(Backend::Virtual);
    let scenario = campaign.parsed("scenario")?.unwrap_or(Scenario::Simultaneous);
    let phases = campaign
        .list("phases", |v| {
            v.as_str()
                .ok_or_else(|| "expected phase names".to_owned())
                .and_then(|s| s.parse::<Phase>())
        })?
        .unwrap_or_else(|| Phase::ALL.to_vec());
    let transports = campaign
        .list("transports", |v| {
            v.as_str()
                .ok_or_else(|| "expected transport names".to_owned())
                .and_then(|s| s.parse::<TransportRole>().map_err(|e| e.to_string()))
        })?
        .unwrap_or_else(|| TransportRole::ALL.to_vec());
    let trace = campaign.bool_or("trace", false)?;

    let hub = parse_hub(&mut hub_sec)?;
    let nodes = node_secs
        .into_iter()
        .map(parse_node)
        .collect::<Result<Vec<_>, _>>()?;

    let uplink_capacity_bps = match top.table("cell")? {
        Some(mut cell) => {
            let cap = cell.f64("uplink_capacity_bps")?;
            if let Some(c) = cap {
                positive(cell.key("uplink_capacity_bps"), c)?;
            }
            cell.finish()?;
            cap
        }
        None => None,
    };
    let radio = parse_radio(top.table("radio")?)?;
    let plan = parse_plan(top.table("plan")?)?;
    let probe = parse_probe(top.table("probe")?)?;
    let throughput = parse_throughput(top.table("throughput")?)?;
    let stream = parse_stream(top.table("stream")?)?;
    let thresholds = parse_thresholds(top.table("thresholds")?)?;

    let config = CampaignConfig {
        name,
        seed,
        backend,
        scenario,
        phases,
        transports,
        trace,
        uplink_capacity_bps,
        radio,
        hub,
        nodes,
        plan,
        probe,
        throughput,
        stream,
        thresholds,
    };
    campaign.finish()?;
    hub_sec.finish()?;
    top.finish()?;
    config.validate()?;
    Ok(config)
}

fn parse_hub(s: &mut Section<'_>) -> Result<HubConfig, ConfigError> {
    let name = s
        .str("name")?
        .ok_or_else(|| ConfigError::MissingRequired(vec!["hub.name".into()]))?
        .to_owned();
    Ok(HubConfig {
        name,
        x_m: s.f64_or("x_m", 0.0)?,
        y_m: s.f64_or("y_m", 0.0)?,
        height_m: positive(s.key("height_m"), s.f64_or("height_m", 25.0)?)?,
        tx_power_dbm: s.f64_or("tx_power_dbm", 35.0)?,
        gain_dbi: s.f64_or("gain_dbi", 4.0)?,
        host: s.str("host")?.unwrap_or("127.0.0.1").to_owned(),
    })
}

fn parse_node(mut s: Section<'_>) -> Result<NodeConfig, ConfigError> {
    let name = s
        .str("name")?
        .ok_or_else(|| ConfigError::MissingRequired(vec![s.key("name")]))?
        .to_owned();
    let source_id = match s.u64("source_id")? {
        None => None,
        Some(v @ 1..=3) => Some(v as u16),
        Some(v) => return Err(invalid(s.key("source_id"), format!("{v} is not an inverter number (1-3)"))),
    };
    let active = s.bool_or("active", true)?;
    let x_m = s.f64_or("x_m", 0.0)?;
    let y_m = s.f64_or("y_m", 0.0)?;
    let height_m = positive(s.key("height_m"), s.f64_or("height_m", 3.0)?)?;
    let tx_power_dbm = s.f64_or("tx_power_dbm", 23.0)?;
    let gain_dbi = s.f64_or("gain_dbi", 12.5)?;
    let (link, target_loss) = match s.table("link")? {
        Some(l) => parse_link(l)?,
        None => (LinkProfile::default(), None),
    };
    s.finish()?;
    Ok(NodeConfig {
        name,
        source_id,
        active,
        x_m,
        y_m,
        height_m,
        tx_power_dbm,
        gain_dbi,
        link,
        target_loss,
    })
}

fn parse_link(mut s: Section<'_>) -> Result<(LinkProfile, Option<f64>), ConfigError> {
    let d = LinkProfile::default();
    let mut p = LinkProfile {
        sinr_db: s.f64_or("sinr_db", d.sinr_db)?,
        loss_k: s.f64_or("loss_k", d.loss_k)?,
        loss_theta_db: s.f64_or("loss_theta_db", d.loss_theta_db)?,
        base_delay_ms: s.f64_or("base_delay_ms", d.base_delay_ms)?,
        jitter_ms: s.f64_or("jitter_ms", d.jitter_ms)?,
        rate_bps_up: s.f64_or("rate_bps_up", d.rate_bps_up)?,
        rate_bps_down: s.f64_or("rate_bps_down", d.rate_bps_down)?,
        reorder_prob: s.f64_or("reorder_prob", d.reorder_prob)?,
        queue_frames: s.u64("queue_frames")?.map_or(d.queue_frames, |v| v as usize),
        bucket_bytes: s.u64("bucket_bytes")?.unwrap_or(d.bucket_bytes),
    };
    let explicit_theta = s.map.contains_key("loss_theta_db");
    let target = s.f64("target_loss")?;
    if let Some(t) = target {
        if explicit_theta {
            return Err(invalid(s.key("target_loss"), "give either target_loss or loss_theta_db"));
        }
        if !(t > 0.0 && t < 1.0) {
            return Err(invalid(s.key("target_loss"), "must lie strictly between 0 and 1"));
        }
        p = p
            .calibrated(t)
            .map_err(|e| invalid(s.key("target_loss"), e.to_string()))?;
    }
    p.validate().map_err(|e| invalid(s.path.clone(), e.to_string()))?;
    s.finish()?;
    Ok((p, target))
}

fn parse_radio(sec: Option<Section<'_>>) -> Result<RadioConfig, ConfigError> {
    let mut budget = LinkBudget::<f64>::default();
    let mut raster = RasterSpec {
        x_min_m: -1000.0,
        y_min_m: -1000.0,
        width_m: 2000.0,
        height_m: 2000.0,
        resolution_m: 20.0,
        rx_height_m: 3.0,
        rx_gain_dbi: 12.5,
    };
    let Some(mut s) = sec else {
        return Ok(RadioConfig {
            budget,
            band40: true,
            raster,
        });
    };
    let d = PropagationParams::<f64>::default();
    budget.params = PropagationParams {
        freq_mhz: s.f64_or("freq_mhz", d.freq_mhz)?,
        ref_distance_m: s.f64_or("ref_distance_m", d.ref_distance_m)?,
        pathloss_exponent: s.f64_or("pathloss_exponent", d.pathloss_exponent)?,
        height_gain_coeff: s.f64_or("height_gain_coeff", d.height_gain_coeff)?,
        ref_height_m: s.f64_or("ref_height_m", d.ref_height_m)?,
    };
    budget.bandwidth_hz = positive(s.key("bandwidth_mhz"), s.f64_or("bandwidth_mhz", 20.0)?)? * 1e6;
    budget.noise_figure_db = s.f64_or("noise_figure_db", 7.0)?;
    budget.interference_dbm = s
        .list("interference_dbm", |v| match v {
            toml::Value::Float(f) => Ok(*f),
            toml::Value::Integer(i) => Ok(*i as f64),
            _ => Err("expected numbers".to_owned()),
        })?
        .unwrap_or_default();
    let dt = CoverageThresholds::<f64>::default();
    budget.thresholds = CoverageThresholds {
        edge_db: s.f64_or("edge_db", dt.edge_db)?,
        high_db: s.f64_or("high_db", dt.high_db)?,
    };
    if budget.thresholds.high_db < budget.thresholds.edge_db {
        return Err(invalid(s.key("high_db"), "must not be below edge_db"));
    }
    let band40 = s.bool_or("band40", true)?;
    budget
        .params
        .validate(band40)
        .map_err(|e| invalid(s.path.clone(), e.to_string()))?;
    if let Some(mut r) = s.table("raster")? {
        raster = RasterSpec {
            x_min_m: r.f64_or("x_min_m", raster.x_min_m)?,
            y_min_m: r.f64_or("y_min_m", raster.y_min_m)?,
            width_m: r.f64_or("width_m", raster.width_m)?,
            height_m: r.f64_or("height_m", raster.height_m)?,
            resolution_m: r.f64_or("resolution_m", raster.resolution_m)?,
            rx_height_m: r.f64_or("rx_height_m", raster.rx_height_m)?,
            rx_gain_dbi: r.f64_or("rx_gain_dbi", raster.rx_gain_dbi)?,
        };
        r.finish()?;
    }
    s.finish()?;
    Ok(RadioConfig {
        budget,
        band40,
        raster,
    })
}

fn parse_plan(sec: Option<Section<'_>>) -> Result<PlanSettings, ConfigError> {
    let mut out = PlanSettings {
        bound: PlanBoundSetting::DurationS(3600.0),
        jitter_ms: 0.0,
        override_range: false,
        periods_s: [1.0, 16.0, 65.0],
    };
    let Some(mut s) = sec else {
        return Ok(out);
    };
    match (s.f64("duration_s")?, s.u64("count")?) {
        (Some(_), Some(_)) => return Err(invalid(s.key("count"), "give either duration_s or count")),
        (Some(d), None) => out.bound = PlanBoundSetting::DurationS(positive(s.key("duration_s"), d)?),
        (None, Some(0)) => return Err(invalid(s.key("count"), "must be positive")),
        (None, Some(n)) => out.bound = PlanBoundSetting::Count(n),
        (None, None) => {}
    }
    out.jitter_ms = s.f64_or("jitter_ms", 0.0)?;
    if out.jitter_ms < 0.0 {
        return Err(invalid(s.key("jitter_ms"), "must not be negative"));
    }
    out.override_range = s.bool_or("override_range", false)?;
    for (i, k) in ["d1_period_s", "d2_period_s", "d3_period_s"].iter().enumerate() {
        out.periods_s[i] = positive(s.key(k), s.f64_or(k, out.periods_s[i])?)?;
    }
    s.finish()?;
    Ok(out)
}

fn parse_probe(sec: Option<Section<'_>>) -> Result<ProbeConfig, ConfigError> {
    let mut out = ProbeConfig {
        count: 1000,
        interval_ms: 100.0,
        pad_bytes: 56,
        timeout_ms: 1000.0,
    };
    let Some(mut s) = sec else {
        return Ok(out);
    };
    out.count = s.u64("count")?.unwrap_or(out.count);
    out.interval_ms = s.f64_or("interval_ms", out.interval_ms)?;
    if out.interval_ms < 0.0 {
        return Err(invalid(s.key("interval_ms"), "must not be negative"));
    }
    out.pad_bytes = s.u64("pad_bytes")?.map_or(out.pad_bytes, |v| v as usize);
    if out.pad_bytes > usize::from(u16::MAX) {
        return Err(invalid(s.key("pad_bytes"), "at most 65535"));
    }
    out.timeout_ms = positive(s.key("timeout_ms"), s.f64_or("timeout_ms", out.timeout_ms)?)?;
    s.finish()?;
    Ok(out)
}

fn parse_throughput(sec: Option<Section<'_>>) -> Result<ThroughputConfig, ConfigError> {
    let mut out = ThroughputConfig {
        duration_s: 10.0,
        frame_bytes: 1024,
        stream_write_bytes: 8192,
        window_ms: 1000.0,
        directions: vec![LinkDirection::Up, LinkDirection::Down],
    };
    let Some(mut s) = sec else {
        return Ok(out);
    };
    out.duration_s = positive(s.key("duration_s"), s.f64_or("duration_s", out.duration_s)?)?;
    out.frame_bytes = s.u64("frame_bytes")?.map_or(out.frame_bytes, |v| v as usize);
    if out.frame_bytes == 0 || out.frame_bytes > crate::transport::MAX_DATAGRAM_PAYLOAD {
        return Err(invalid(s.key("frame_bytes"), "must be between 1 and 61440"));
    }
    out.stream_write_bytes = s
        .u64("stream_write_bytes")?
        .map_or(out.stream_write_bytes, |v| v as usize);
    if out.stream_write_bytes == 0 || out.stream_write_bytes >= crate::transport::MAX_FRAME_LEN {
        return Err(invalid(s.key("stream_write_bytes"), "must be between 1 and 1 MiB"));
    }
    out.window_ms = positive(s.key("window_ms"), s.f64_or("window_ms", out.window_ms)?)?;
    if let Some(dirs) = s.list("directions", |v| {
        v.as_str()
            .ok_or_else(|| "expected \"up\" or \"down\"".to_owned())
            .and_then(|d| d.parse::<LinkDirection>())
    })? {
        out.directions = dirs;
    }
    s.finish()?;
    Ok(out)
}

fn parse_stream(sec: Option<Section<'_>>) -> Result<StreamConfig, ConfigError> {
    let mut out = StreamConfig {
        rto_ms: None,
        max_retries: 12,
    };
    let Some(mut s) = sec else {
        return Ok(out);
    };
    if let Some(r) = s.f64("rto_ms")? {
        out.rto_ms = Some(positive(s.key("rto_ms"), r)?);
    }
    if let Some(m) = s.u64("max_retries")? {
        out.max_retries = u32::try_from(m).map_err(|_| invalid(s.key("max_retries"), "too large"))?;
    }
    s.finish()?;
    Ok(out)
}

fn parse_thresholds(sec: Option<Section<'_>>) -> Result<Thresholds, ConfigError> {
    let Some(mut s) = sec else {
        return Ok(Thresholds::default());
    };
    let out = Thresholds {
        max_tcp_loss_pct: s.f64("max_tcp_loss_pct")?,
        max_udp_loss_pct: s.f64("max_udp_loss_pct")?,
        max_rtt_avg_ms: s.f64("max_rtt_avg_ms")?,
        min_throughput_fraction: s.f64("min_throughput_fraction")?,
    };
    s.finish()?;
    Ok(out)
}

impl CampaignConfig {
    /// Cross-section checks; rerun after command-line overrides.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut names = BTreeSet::from([self.hub.name.as_str()]);
        for n in &self.nodes {
            if !names.insert(n.name.as_str()) {
                return Err(invalid("node.name", format!("duplicate node name {:?}", n.name)));
            }
        }
        let mut sources = BTreeSet::new();
        for n in &self.nodes {
            if let Some(id) = n.source_id {
                if !sources.insert(id) {
                    return Err(invalid("node.source_id", format!("source {id} assigned to more than one node")));
                }
            }
        }
        if self.scenario == Scenario::Simultaneous && self.active_nodes().count() < 2 {
            return Err(invalid("campaign.scenario", "simultaneous needs at least 2 active nodes"));
        }
        if self.active_nodes().count() == 0 {
            return Err(invalid("node.active", "no active node"));
        }
        let mut seen = BTreeSet::new();
        if self.phases.iter().any(|p| !seen.insert(*p)) {
            return Err(invalid("campaign.phases", "phase listed twice"));
        }
        let mut seen = BTreeSet::new();
        if self.transports.iter().any(|t| !seen.insert(*t)) {
            return Err(invalid("campaign.transports", "transport listed twice"));
        }
        self.plan_config()
            .and_then(|p| crate::telemetry::build_plan(&p).map_err(|e| invalid("plan", e.to_string())))?;
        Ok(())
    }

    pub fn active_nodes(&self) -> impl Iterator<Item = (usize, &NodeConfig)> {
        self.nodes.iter().enumerate().filter(|(_, n)| n.active)
    }

    /// Message plan for the active telemetry sources.
    pub fn plan_config(&self) -> Result<PlanConfig, ConfigError> {
        let to_us = |s: f64| (s * SECOND_US as f64).round() as u64;
        let kinds = [
            (MessageClass::D1, RecordKind::ArmLog),
            (MessageClass::D2, RecordKind::PqLog),
            (MessageClass::D3, RecordKind::CeiAci),
        ];
        let flows = kinds
            .iter()
            .zip(self.plan.periods_s)
            .map(|(&(class, kind), p)| FlowSpec {
                class,
                kind,
                period_us: to_us(p),
            })
            .collect();
        Ok(PlanConfig {
            sources: self
                .active_nodes()
                .filter_map(|(_, n)| n.source_id)
                .collect(),
            flows,
            jitter_us: (self.plan.jitter_ms * 1000.0).round() as u64,
            bound: match self.plan.bound {
                PlanBoundSetting::DurationS(d) => PlanBound::Duration {
                    duration_us: to_us(d),
                },
                PlanBoundSetting::Count(n) => PlanBound::Count(n),
            },
            override_range: self.plan.override_range,
        })
    }

    pub fn hub_radio(&self) -> RadioNode<f64> {
        RadioNode {
            name: self.hub.name.clone(),
            x_m: self.hub.x_m,
            y_m: self.hub.y_m,
            antenna_height_m: self.hub.height_m,
            tx_power_dbm: self.hub.tx_power_dbm,
            antenna_gain_dbi: self.hub.gain_dbi,
            role: NodeRole::BaseStation,
        }
    }

    pub fn node_radios(&self) -> Vec<RadioNode<f64>> {
        self.nodes
            .iter()
            .map(|n| RadioNode {
                name: n.name.clone(),
                x_m: n.x_m,
                y_m: n.y_m,
                antenna_height_m: n.height_m,
                tx_power_dbm: n.tx_power_dbm,
                antenna_gain_dbi: n.gain_dbi,
                role: NodeRole::Cpe,
            })
            .collect()
    }
}
