//! Architecture configuration and its `key=value` text form.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::ResizeMode;

use super::backbone;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MergeStyle {
    Concat,
    Sum,
}

/// One lateral connection from a backbone tap into the decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SkipSpec {
    pub output_stride: usize,
    pub merge: MergeStyle,
}

impl SkipSpec {
    pub fn concat(output_stride: usize) -> Self {
        Self { output_stride, merge: MergeStyle::Concat }
    }

    pub fn sum(output_stride: usize) -> Self {
        Self { output_stride, merge: MergeStyle::Sum }
    }
}

impl fmt::Display for SkipSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let style = match self.merge {
            MergeStyle::Concat => 'C',
            MergeStyle::Sum => 'S',
        };
        write!(f, "{}-{style}", self.output_stride)
    }
}

impl FromStr for SkipSpec {
    type Err = Error;

    /// Parses tokens such as `8-C` or `4-S`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("skips: bad token '{s}', expected <os>-C or <os>-S"));
        let (os, style) = s.trim().split_once('-').ok_or_else(bad)?;
        let output_stride = os.trim().parse().map_err(|_| bad())?;
        let merge = match style.trim() {
            "C" | "c" => MergeStyle::Concat,
            "S" | "s" => MergeStyle::Sum,
            _ => return Err(bad()),
        };
        Ok(Self { output_stride, merge })
    }
}

/// Formats a skip list the way the ablation tables label it; `0` when empty.
pub fn skips_label(skips: &[SkipSpec]) -> String {
    if skips.is_empty() {
        "0".to_string()
    } else {
        skips.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
    }
}

pub fn parse_skips(value: &str) -> Result<Vec<SkipSpec>> {
    let v = value.trim();
    if v.is_empty() || v == "0" || v.eq_ignore_ascii_case("none") {
        return Ok(Vec::new());
    }
    v.split(',').map(str::parse).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    /// Pooling grids; `G` means a `G x G` grid and `1` the global branch.
    pub pyramid_bins: Vec<usize>,
    pub use_group_conv: bool,
    pub group_kernels: Vec<usize>,
    pub enc_filters: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { pyramid_bins: vec![4, 8, 16], use_group_conv: true, group_kernels: vec![3, 5], enc_filters: 32 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecoderConfig {
    /// Ordered by strictly decreasing output stride.
    pub skips: Vec<SkipSpec>,
    pub dec_filters: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self { skips: vec![SkipSpec::concat(8), SkipSpec::sum(4)], dec_filters: 64 }
    }
}

/// Output width of the encoder's final 1x1 aggregation conv.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum AggregationWidth {
    #[default]
    EncoderWidth,
    DecoderWidth,
}

/// Where the 1x1 classifier sits in the decoder.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum ClassifierPlacement {
    /// Ahead of the trailing run of sum merges, which then refine class
    /// logits with 1x1 projections of their skips. Without trailing sum
    /// merges this is the same as `AfterMerges`.
    #[default]
    BeforeSums,
    /// After the last merge block.
    AfterMerges,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub m: usize,
    pub num_classes: usize,
    pub input_h: usize,
    pub input_w: usize,
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub aggregation_width_mode: AggregationWidth,
    /// 1-based backbone row indices whose depthwise conv uses dilation 2.
    pub dilation_rows: Vec<usize>,
    pub resize_mode: ResizeMode,
    pub classifier_placement: ClassifierPlacement,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::cityscapes()
    }
}

pub const KEYS: &[&str] = &[
    "m",
    "num_classes",
    "input_h",
    "input_w",
    "enc_filters",
    "dec_filters",
    "pyramid_bins",
    "use_group_conv",
    "group_kernels",
    "skips",
    "aggregation_width_mode",
    "dilation_rows",
    "resize_mode",
    "classifier_placement",
];

impl ModelConfig {
    /// m=480, 19 classes at 1024x2048, encoder/decoder filters (32, 64).
    pub fn cityscapes() -> Self {
        Self {
            m: 480,
            num_classes: 19,
            input_h: 1024,
            input_w: 2048,
            encoder: EncoderConfig::default(),
            decoder: DecoderConfig::default(),
            aggregation_width_mode: AggregationWidth::default(),
            dilation_rows: backbone::DEFAULT_DILATION_ROWS.to_vec(),
            resize_mode: ResizeMode::AlignCorners,
            classifier_placement: ClassifierPlacement::default(),
        }
    }

    /// m=448, 32 classes at 512x512, encoder/decoder filters (64, 64).
    pub fn ade20k() -> Self {
        let mut cfg = Self::cityscapes();
        cfg.m = 448;
        cfg.num_classes = 32;
        cfg.input_h = 512;
        cfg.input_w = 512;
        cfg.encoder.enc_filters = 64;
        cfg.decoder.dec_filters = 64;
        cfg
    }

    pub fn with_resolution(mut self, h: usize, w: usize) -> Self {
        self.input_h = h;
        self.input_w = w;
        self
    }

    /// Width of the encoder output feeding the decoder.
    pub fn aggregation_width(&self) -> usize {
        match self.aggregation_width_mode {
            AggregationWidth::EncoderWidth => self.encoder.enc_filters,
            AggregationWidth::DecoderWidth => self.decoder.dec_filters,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::config("m: must be positive"));
        }
        if self.num_classes == 0 {
            return Err(Error::config("num_classes: must be at least 1"));
        }
        for (key, v) in [("input_h", self.input_h), ("input_w", self.input_w)] {
            if v == 0 || v % 16 != 0 {
                return Err(Error::config(format!("{key}: {v} is not a positive multiple of 16")));
            }
        }

        let enc = &self.encoder;
        if enc.enc_filters == 0 {
            return Err(Error::config("enc_filters: must be positive"));
        }
        if enc.pyramid_bins.is_empty() {
            return Err(Error::config("pyramid_bins: at least one level is required"));
        }
        if enc.pyramid_bins.contains(&0) {
            return Err(Error::config("pyramid_bins: grid sizes must be at least 1"));
        }
        if enc.pyramid_bins.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config(format!("pyramid_bins: {:?} is not strictly increasing", enc.pyramid_bins)));
        }
        if enc.group_kernels.is_empty() {
            return Err(Error::config("group_kernels: at least one kernel size is required"));
        }
        if let Some(k) = enc.group_kernels.iter().find(|&&k| k == 0 || k % 2 == 0) {
            return Err(Error::config(format!("group_kernels: kernel size {k} must be odd")));
        }
        let branches = enc.group_kernels.len();
        if !enc.enc_filters.is_multiple_of(branches) {
            return Err(Error::config(format!(
                "enc_filters: {} is not divisible by {branches} kernel branches",
                enc.enc_filters
            )));
        }
        if enc.use_group_conv && !self.m.is_multiple_of(branches) {
            return Err(Error::config(format!(
                "use_group_conv: m={} channels cannot be split into {branches} equal groups",
                self.m
            )));
        }

        let dec = &self.decoder;
        if dec.dec_filters == 0 {
            return Err(Error::config("dec_filters: must be positive"));
        }
        for s in &dec.skips {
            if !backbone::SKIP_STRIDES.contains(&s.output_stride) {
                return Err(Error::config(format!(
                    "skips: no backbone tap at output stride {} (available: 2, 4, 8)",
                    s.output_stride
                )));
            }
        }
        if dec.skips.windows(2).any(|w| w[0].output_stride <= w[1].output_stride) {
            return Err(Error::config(format!(
                "skips: '{}' is not in strictly decreasing output stride",
                skips_label(&dec.skips)
            )));
        }

        backbone::validate_dilation_rows(&self.dilation_rows)
    }

    /// Parses the `key=value` text form. Omitted keys keep their defaults;
    /// unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key=value, got '{line}'", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(Error::config(format!("{key}: unknown key (line {})", lineno + 1)));
            }
            if !seen.insert(key.to_string()) {
                return Err(Error::config(format!("{key}: repeated key (line {})", lineno + 1)));
            }
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "m" => self.m = parse_usize(key, value)?,
            "num_classes" => self.num_classes = parse_usize(key, value)?,
            "input_h" => self.input_h = parse_usize(key, value)?,
            "input_w" => self.input_w = parse_usize(key, value)?,
            "enc_filters" => self.encoder.enc_filters = parse_usize(key, value)?,
            "dec_filters" => self.decoder.dec_filters = parse_usize(key, value)?,
            "pyramid_bins" => self.encoder.pyramid_bins = parse_list(key, value)?,
            "use_group_conv" => self.encoder.use_group_conv = parse_bool(key, value)?,
            "group_kernels" => self.encoder.group_kernels = parse_list(key, value)?,
            "skips" => self.decoder.skips = parse_skips(value)?,
            "aggregation_width_mode" => {
                self.aggregation_width_mode = match value {
                    "encoder" | "EncoderWidth" => AggregationWidth::EncoderWidth,
                    "decoder" | "DecoderWidth" => AggregationWidth::DecoderWidth,
                    _ => return Err(bad_value(key, value, "encoder | decoder")),
                }
            }
            "dilation_rows" => self.dilation_rows = parse_list(key, value)?,
            "resize_mode" => {
                self.resize_mode = match value {
                    "align-corners" => ResizeMode::AlignCorners,
                    "half-pixel" => ResizeMode::HalfPixel,
                    _ => return Err(bad_value(key, value, "align-corners | half-pixel")),
                }
            }
            "classifier_placement" => {
                self.classifier_placement = match value {
                    "before-sums" => ClassifierPlacement::BeforeSums,
                    "after-merges" => ClassifierPlacement::AfterMerges,
                    _ => return Err(bad_value(key, value, "before-sums | after-merges")),
                }
            }
            _ => return Err(Error::config(format!("{key}: unknown key"))),
        }
        Ok(())
    }

    /// Renders every key; [`ModelConfig::parse`] reads it back unchanged.
    pub fn to_text(&self) -> String {
        let list = |v: &[usize]| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "m={}", self.m);
        let _ = writeln!(s, "num_classes={}", self.num_classes);
        let _ = writeln!(s, "input_h={}", self.input_h);
        let _ = writeln!(s, "input_w={}", self.input_w);
        let _ = writeln!(s, "enc_filters={}", self.encoder.enc_filters);
        let _ = writeln!(s, "dec_filters={}", self.decoder.dec_filters);
        let _ = writeln!(s, "pyramid_bins={}", list(&self.encoder.pyramid_bins));
        let _ = writeln!(s, "use_group_conv={}", self.encoder.use_group_conv);
        let _ = writeln!(s, "group_kernels={}", list(&self.encoder.group_kernels));
        let _ = writeln!(s, "skips={}", skips_label(&self.decoder.skips));
        let agg = match self.aggregation_width_mode {
            AggregationWidth::EncoderWidth => "encoder",
            AggregationWidth::DecoderWidth => "decoder",
        };
        let _ = writeln!(s, "aggregation_width_mode={agg}");
        let _ = writeln!(s, "dilation_rows={}", list(&self.dilation_rows));
        let resize = match self.resize_mode {
            ResizeMode::AlignCorners => "align-corners",
            ResizeMode::HalfPixel => "half-pixel",
        };
        let _ = writeln!(s, "resize_mode={resize}");
        let placement = match self.classifier_placement {
            ClassifierPlacement::BeforeSums => "before-sums",
            ClassifierPlacement::AfterMerges => "after-merges",
        };
        let _ = writeln!(s, "classifier_placement={placement}");
        s
    }
}

fn bad_value(key: &str, value: &str, expected: &str) -> Error {
    Error::config(format!("{key}: invalid value '{value}', expected {expected}"))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value.parse().map_err(|_| bad_value(key, value, "a non-negative integer"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "y" | "1" | "on" => Ok(true),
        "false" | "no" | "n" | "0" | "off" => Ok(false),
        _ => Err(bad_value(key, value, "true | false")),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    let v = value.trim().trim_start_matches('[').trim_end_matches(']');
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|t| parse_usize(key, t.trim())).collect()
}
