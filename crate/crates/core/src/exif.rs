//! EXIF decoding straight from the TIFF/IFD byte layout, GPS export and the
//! leaf-size feasibility report.
//!
//! Containers: JPEG (APP1 `Exif\0\0`), PNG (`eXIf` chunk) and bare TIFF.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod tag {
    pub const IMAGE_WIDTH: u16 = 0x0100;
    pub const IMAGE_LENGTH: u16 = 0x0101;
    pub const X_RESOLUTION: u16 = 0x011A;
    pub const Y_RESOLUTION: u16 = 0x011B;
    pub const EXIF_IFD: u16 = 0x8769;
    pub const GPS_IFD: u16 = 0x8825;
    pub const SUBJECT_DISTANCE: u16 = 0x9206;
    pub const FOCAL_LENGTH: u16 = 0x920A;
    pub const PIXEL_X_DIMENSION: u16 = 0xA002;
    pub const PIXEL_Y_DIMENSION: u16 = 0xA003;
    pub const FOCAL_PLANE_X_RES: u16 = 0xA20E;
    pub const FOCAL_PLANE_Y_RES: u16 = 0xA20F;
    pub const FOCAL_PLANE_UNIT: u16 = 0xA210;
    pub const GPS_LATITUDE_REF: u16 = 0x0001;
    pub const GPS_LATITUDE: u16 = 0x0002;
    pub const GPS_LONGITUDE_REF: u16 = 0x0003;
    pub const GPS_LONGITUDE: u16 = 0x0004;
}

/// Unsigned TIFF rational with a nonzero denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rational {
    pub num: u32,
    pub den: u32,
}

impl Rational {
    pub fn new(num: u32, den: u32) -> Option<Self> {
        (den != 0).then_some(Rational { num, den })
    }

    pub fn value(self) -> f64 {
        f64::from(self.num) / f64::from(self.den)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FocalPlaneUnit {
    Inch,
    Cm,
}

impl FocalPlaneUnit {
    pub fn cm_per_unit(self) -> f64 {
        match self {
            FocalPlaneUnit::Inch => 2.54,
            FocalPlaneUnit::Cm => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FocalPlaneUnit::Inch => "inch",
            FocalPlaneUnit::Cm => "cm",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExifRecord {
    pub filename: String,
    pub width_px: Option<u32>,
    pub height_px: Option<u32>,
    pub x_resolution: Option<Rational>,
    pub y_resolution: Option<Rational>,
    pub focal_length_mm: Option<Rational>,
    pub focal_plane_x_res: Option<Rational>,
    pub focal_plane_y_res: Option<Rational>,
    pub focal_plane_unit: Option<FocalPlaneUnit>,
    pub subject_distance_m: Option<Rational>,
    pub latitude_deg: Option<f64>,
    pub longitude_deg: Option<f64>,
}

impl ExifRecord {
    pub fn empty(filename: impl Into<String>) -> Self {
        ExifRecord {
            filename: filename.into(),
            ..Default::default()
        }
    }

    pub fn is_all_null(&self) -> bool {
        *self == ExifRecord::empty(self.filename.clone())
    }
}

#[derive(Debug)]
struct Malformed(String);

type Parse<T> = std::result::Result<T, Malformed>;

fn bad<T>(msg: impl Into<String>) -> Parse<T> {
    Err(Malformed(msg.into()))
}

/// Locate the TIFF block inside a container; `Ok(None)` when there is no
/// EXIF at all.
fn find_tiff(bytes: &[u8]) -> Parse<Option<&[u8]>> {
    if bytes.starts_with(&[0xFF, 0xD8]) {
        let mut i = 2;
        while i + 4 <= bytes.len() {
            if bytes[i] != 0xFF {
                return bad("JPEG marker expected");
            }
            let marker = bytes[i + 1];
            if marker == 0xFF {
                i += 1;
                continue;
            }
            // Standalone markers carry no length.
            if marker == 0xD8 || marker == 0x01 || (0xD0..=0xD7).contains(&marker) {
                i += 2;
                continue;
            }
            if marker == 0xDA || marker == 0xD9 {
                return Ok(None);
            }
            let len = usize::from(u16::from_be_bytes([bytes[i + 2], bytes[i + 3]]));
            if len < 2 || i + 2 + len > bytes.len() {
                return bad("JPEG segment overruns file");
            }
            let body = &bytes[i + 4..i + 2 + len];
            if marker == 0xE1 && body.starts_with(b"Exif\0\0") {
                return Ok(Some(&body[6..]));
            }
            i += 2 + len;
        }
        return Ok(None);
    }
    const PNG_SIG: &[u8] = &[0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];
    if bytes.starts_with(PNG_SIG) {
        let mut i = PNG_SIG.len();
        while i + 8 <= bytes.len() {
            let len = u32::from_be_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
            let kind = &bytes[i + 4..i + 8];
            let end = i + 8 + len;
            if end + 4 > bytes.len() {
                return bad("PNG chunk overruns file");
            }
            if kind == b"eXIf" {
                return Ok(Some(&bytes[i + 8..end]));
            }
            if kind == b"IEND" {
                break;
            }
            i = end + 4;
        }
        return Ok(None);
    }
    if bytes.starts_with(b"II*\0") || bytes.starts_with(b"MM\0*") {
        return Ok(Some(bytes));
    }
    Ok(None)
}

struct Tiff<'a> {
    data: &'a [u8],
    little: bool,
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    typ: u16,
    count: u32,
    /// Offset of the value bytes within the TIFF block.
    at: usize,
}

fn type_size(typ: u16) -> Option<usize> {
    Some(match typ {
        1 | 2 | 6 | 7 => 1,
        3 | 8 => 2,
        4 | 9 | 11 => 4,
        5 | 10 | 12 => 8,
        _ => return None,
    })
}

impl<'a> Tiff<'a> {
    fn new(data: &'a [u8]) -> Parse<Self> {
        let little = match data.get(..4) {
            Some(b"II*\0") => true,
            Some(b"MM\0*") => false,
            _ => return bad("bad TIFF header"),
        };
        Ok(Tiff { data, little })
    }

    fn u16_at(&self, at: usize) -> Parse<u16> {
        let b: [u8; 2] = match self.data.get(at..at + 2) {
            Some(s) => s.try_into().expect("2 bytes"),
            None => return bad("read past end of TIFF"),
        };
        Ok(if self.little { u16::from_le_bytes(b) } else { u16::from_be_bytes(b) })
    }

    fn u32_at(&self, at: usize) -> Parse<u32> {
        let b: [u8; 4] = match self.data.get(at..at + 4) {
            Some(s) => s.try_into().expect("4 bytes"),
            None => return bad("read past end of TIFF"),
        };
        Ok(if self.little { u32::from_le_bytes(b) } else { u32::from_be_bytes(b) })
    }

    fn ifd(&self, offset: usize) -> Parse<BTreeMap<u16, Entry>> {
        let n = usize::from(self.u16_at(offset)?);
        let mut out = BTreeMap::new();
        for k in 0..n {
            let e = offset + 2 + 12 * k;
            let tag = self.u16_at(e)?;
            let typ = self.u16_at(e + 2)?;
            let count = self.u32_at(e + 4)?;
            let Some(size) = type_size(typ) else {
                continue;
            };
            let total = size
                .checked_mul(count as usize)
                .ok_or_else(|| Malformed("IFD entry size overflows".into()))?;
            let at = if total <= 4 { e + 8 } else { self.u32_at(e + 8)? as usize };
            if at.checked_add(total).is_none_or(|end| end > self.data.len()) {
                return bad(format!("tag {tag:#06x} points past end of TIFF"));
            }
            out.insert(tag, Entry { typ, count, at });
        }
        Ok(out)
    }

    fn uint(&self, e: &Entry, i: usize) -> Parse<Option<u32>> {
        if i >= e.count as usize {
            return Ok(None);
        }
        Ok(match e.typ {
            1 | 7 => Some(u32::from(self.data[e.at + i])),
            3 => Some(u32::from(self.u16_at(e.at + 2 * i)?)),
            4 => Some(self.u32_at(e.at + 4 * i)?),
            _ => None,
        })
    }

    fn rational(&self, e: &Entry, i: usize) -> Parse<Option<Rational>> {
        if e.typ != 5 || i >= e.count as usize {
            return Ok(None);
        }
        let at = e.at + 8 * i;
        Ok(Rational::new(self.u32_at(at)?, self.u32_at(at + 4)?))
    }

    fn ascii(&self, e: &Entry) -> Option<String> {
        if e.typ != 2 {
            return None;
        }
        let raw = &self.data[e.at..e.at + e.count as usize];
        let s: String = raw.iter().take_while(|&&b| b != 0).map(|&b| b as char).collect();
        Some(s.trim().to_owned())
    }
}

fn get_uint(t: &Tiff, ifd: &BTreeMap<u16, Entry>, tag: u16) -> Parse<Option<u32>> {
    ifd.get(&tag).map_or(Ok(None), |e| t.uint(e, 0))
}

fn get_rational(t: &Tiff, ifd: &BTreeMap<u16, Entry>, tag: u16) -> Parse<Option<Rational>> {
    ifd.get(&tag).map_or(Ok(None), |e| t.rational(e, 0))
}

/// `sign * (d + m/60 + s/3600)` from a DMS rational triple and its
/// reference letter.
fn gps_coordinate(t: &Tiff, gps: &BTreeMap<u16, Entry>, value: u16, reference: u16, neg: char) -> Parse<Option<f64>> {
    let (Some(e), Some(r)) = (gps.get(&value), gps.get(&reference)) else {
        return Ok(None);
    };
    let (Some(d), Some(m), Some(s)) = (t.rational(e, 0)?, t.rational(e, 1)?, t.rational(e, 2)?) else {
        return Ok(None);
    };
    let Some(letter) = t.ascii(r).and_then(|s| s.chars().next()) else {
        return Ok(None);
    };
    let magnitude = d.value() + m.value() / 60.0 + s.value() / 3600.0;
    Ok(Some(if letter.eq_ignore_ascii_case(&neg) { -magnitude } else { magnitude }))
}

fn parse_tiff(filename: &str, data: &[u8]) -> Parse<ExifRecord> {
    let t = Tiff::new(data)?;
    let ifd0 = t.ifd(t.u32_at(4)? as usize)?;
    let sub = |tag: u16| -> Parse<BTreeMap<u16, Entry>> {
        match get_uint(&t, &ifd0, tag)? {
            Some(off) => t.ifd(off as usize),
            None => Ok(BTreeMap::new()),
        }
    };
    let exif = sub(tag::EXIF_IFD)?;
    let gps = sub(tag::GPS_IFD)?;
    let width_px = match get_uint(&t, &ifd0, tag::IMAGE_WIDTH)? {
        Some(v) => Some(v),
        None => get_uint(&t, &exif, tag::PIXEL_X_DIMENSION)?,
    };
    let height_px = match get_uint(&t, &ifd0, tag::IMAGE_LENGTH)? {
        Some(v) => Some(v),
        None => get_uint(&t, &exif, tag::PIXEL_Y_DIMENSION)?,
    };
    let focal_plane_unit = match get_uint(&t, &exif, tag::FOCAL_PLANE_UNIT)? {
        Some(2) => Some(FocalPlaneUnit::Inch),
        Some(3) => Some(FocalPlaneUnit::Cm),
        _ => None,
    };
    // 0 means unknown and 0xFFFFFFFF infinity; neither gives a distance.
    let subject_distance_m = get_rational(&t, &exif, tag::SUBJECT_DISTANCE)?
        .filter(|r| r.num != 0 && r.num != u32::MAX);
    let latitude_deg = gps_coordinate(&t, &gps, tag::GPS_LATITUDE, tag::GPS_LATITUDE_REF, 'S')?;
    let longitude_deg = gps_coordinate(&t, &gps, tag::GPS_LONGITUDE, tag::GPS_LONGITUDE_REF, 'W')?;
    if latitude_deg.is_some_and(|v| !(-90.0..=90.0).contains(&v))
        || longitude_deg.is_some_and(|v| !(-180.0..=180.0).contains(&v))
    {
        return bad("GPS coordinate out of range");
    }
    Ok(ExifRecord {
        filename: filename.to_owned(),
        width_px,
        height_px,
        x_resolution: get_rational(&t, &ifd0, tag::X_RESOLUTION)?,
        y_resolution: get_rational(&t, &ifd0, tag::Y_RESOLUTION)?,
        focal_length_mm: get_rational(&t, &exif, tag::FOCAL_LENGTH)?,
        focal_plane_x_res: get_rational(&t, &exif, tag::FOCAL_PLANE_X_RES)?,
        focal_plane_y_res: get_rational(&t, &exif, tag::FOCAL_PLANE_Y_RES)?,
        focal_plane_unit,
        subject_distance_m,
        latitude_deg,
        longitude_deg,
    })
}

/// Decode EXIF from file contents. Missing EXIF gives an all-null record;
/// malformed EXIF gives an all-null record and a warning message.
pub fn parse_exif(filename: &str, bytes: &[u8]) -> (ExifRecord, Option<String>) {
    let parsed = find_tiff(bytes).and_then(|tiff| match tiff {
        Some(data) => parse_tiff(filename, data),
        None => Ok(ExifRecord::empty(filename)),
    });
    match parsed {
        Ok(r) => (r, None),
        Err(Malformed(msg)) => {
            log::warn!("malformed EXIF in {filename}: {msg}");
            (ExifRecord::empty(filename), Some(msg))
        }
    }
}

/// Read and decode one file; only I/O failures are errors.
pub fn read_exif(path: &Path) -> Result<ExifRecord> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = crate::ocr::file_name(path);
    Ok(parse_exif(&name, &bytes).0)
}

/// Tags the size estimate and the report look for.
pub const CHECKLIST: [&str; 11] = [
    "ImageWidth",
    "ImageLength",
    "XResolution",
    "YResolution",
    "FocalLength",
    "FocalPlaneXResolution",
    "FocalPlaneYResolution",
    "FocalPlaneResolutionUnit",
    "SubjectDistance",
    "GPSLatitude",
    "GPSLongitude",
];

/// Tags without which a physical size cannot be derived.
pub const SIZE_TAGS: [&str; 5] = [
    "FocalLength",
    "FocalPlaneXResolution",
    "FocalPlaneYResolution",
    "FocalPlaneResolutionUnit",
    "SubjectDistance",
];

fn present_flags(r: &ExifRecord) -> [bool; 11] {
    [
        r.width_px.is_some(),
        r.height_px.is_some(),
        r.x_resolution.is_some(),
        r.y_resolution.is_some(),
        r.focal_length_mm.is_some(),
        r.focal_plane_x_res.is_some(),
        r.focal_plane_y_res.is_some(),
        r.focal_plane_unit.is_some(),
        r.subject_distance_m.is_some(),
        r.latitude_deg.is_some(),
        r.longitude_deg.is_some(),
    ]
}

pub fn size_estimable(r: &ExifRecord) -> bool {
    r.focal_length_mm.is_some()
        && r.focal_plane_x_res.is_some()
        && r.focal_plane_y_res.is_some()
        && r.focal_plane_unit.is_some()
        && r.subject_distance_m.is_some()
}

/// Physical extent in cm of a `(w, h)` pixel extent, by thin-lens
/// magnification: `sensor = px / plane_res`, `real = sensor * (d - f) / f`.
/// `None` unless every size tag is present.
pub fn estimate_leaf_size(r: &ExifRecord, leaf_px: (f64, f64)) -> Result<Option<(f64, f64)>> {
    let (Some(f), Some(xr), Some(yr), Some(unit), Some(d)) = (
        r.focal_length_mm,
        r.focal_plane_x_res,
        r.focal_plane_y_res,
        r.focal_plane_unit,
        r.subject_distance_m,
    ) else {
        return Ok(None);
    };
    let f_cm = f.value() / 10.0;
    if f_cm == 0.0 {
        return Err(Error::InvalidInput("zero focal length".into()));
    }
    let d_cm = d.value() * 100.0;
    let magnification = (d_cm - f_cm) / f_cm;
    let per_cm = |res: Rational| res.value() / unit.cm_per_unit();
    let (xr, yr) = (per_cm(xr), per_cm(yr));
    if xr == 0.0 || yr == 0.0 {
        return Err(Error::InvalidInput("zero focal-plane resolution".into()));
    }
    Ok(Some((leaf_px.0 / xr * magnification, leaf_px.1 / yr * magnification)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageFeasibility {
    pub filename: String,
    pub present: Vec<&'static str>,
    pub missing: Vec<&'static str>,
    pub size_estimable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub images: Vec<ImageFeasibility>,
    /// Images lacking each checklist tag.
    pub missing_counts: BTreeMap<&'static str, usize>,
}

pub fn feasibility(records: &[ExifRecord]) -> FeasibilityReport {
    let mut missing_counts: BTreeMap<&'static str, usize> = CHECKLIST.iter().map(|&t| (t, 0)).collect();
    let images = records
        .iter()
        .map(|r| {
            let flags = present_flags(r);
            let (mut present, mut missing) = (Vec::new(), Vec::new());
            for (&tag, ok) in CHECKLIST.iter().zip(flags) {
                if ok {
                    present.push(tag);
                } else {
                    missing.push(tag);
                    *missing_counts.get_mut(tag).expect("listed") += 1;
                }
            }
            ImageFeasibility {
                filename: r.filename.clone(),
                present,
                missing,
                size_estimable: size_estimable(r),
            }
        })
        .collect();
    FeasibilityReport { images, missing_counts }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GpsBBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl GpsBBox {
    pub fn width(&self) -> f64 {
        self.max_lon - self.min_lon
    }

    pub fn height(&self) -> f64 {
        self.max_lat - self.min_lat
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GpsTable {
    pub rows: Vec<(String, f64, f64)>,
    pub bbox: Option<GpsBBox>,
}

impl GpsTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(["filename", "latitude", "longitude"])?;
        for (f, lat, lon) in &self.rows {
            w.write_record([f.clone(), lat.to_string(), lon.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("UTF-8"))
    }

    pub fn bbox_line(&self) -> String {
        match self.bbox {
            None => "gps bbox: none".to_owned(),
            Some(b) => format!(
                "gps bbox: lat [{}, {}] lon [{}, {}] (height {} deg, width {} deg)",
                b.min_lat,
                b.max_lat,
                b.min_lon,
                b.max_lon,
                b.height(),
                b.width()
            ),
        }
    }
}

/// Coordinates of every record with both latitude and longitude.
pub fn export_gps(records: &[ExifRecord]) -> GpsTable {
    let rows: Vec<(String, f64, f64)> = records
        .iter()
        .filter_map(|r| Some((r.filename.clone(), r.latitude_deg?, r.longitude_deg?)))
        .collect();
    let bbox = rows.iter().fold(None, |acc: Option<GpsBBox>, &(_, lat, lon)| {
        Some(match acc {
            None => GpsBBox {
                min_lat: lat,
                max_lat: lat,
                min_lon: lon,
                max_lon: lon,
            },
            Some(b) => GpsBBox {
                min_lat: b.min_lat.min(lat),
                max_lat: b.max_lat.max(lat),
                min_lon: b.min_lon.min(lon),
                max_lon: b.max_lon.max(lon),
            },
        })
    });
    GpsTable { rows, bbox }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Flat CSV of decoded records; rationals are written as decimals.
pub fn records_to_csv(records: &[ExifRecord]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record([
        "filename",
        "width_px",
        "height_px",
        "x_resolution",
        "y_resolution",
        "focal_length_mm",
        "focal_plane_x_res",
        "focal_plane_y_res",
        "focal_plane_unit",
        "subject_distance_m",
        "latitude_deg",
        "longitude_deg",
    ])?;
    for r in records {
        let rat = |v: Option<Rational>| opt(v.map(Rational::value));
        w.write_record([
            r.filename.clone(),
            opt(r.width_px),
            opt(r.height_px),
            rat(r.x_resolution),
            rat(r.y_resolution),
            rat(r.focal_length_mm),
            rat(r.focal_plane_x_res),
            rat(r.focal_plane_y_res),
            opt(r.focal_plane_unit.map(FocalPlaneUnit::as_str)),
            rat(r.subject_distance_m),
            opt(r.latitude_deg),
            opt(r.longitude_deg),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("UTF-8"))
}

/// Human-readable feasibility report.
pub fn render_report(report: &FeasibilityReport, gps: &GpsTable) -> String {
    let n = report.images.len();
    let estimable = report.images.iter().filter(|i| i.size_estimable).count();
    let mut s = String::new();
    let _ = writeln!(s, "leaf-size feasibility over {n} images");
    let _ = writeln!(s, "size estimable: {estimable} of {n}");
    let _ = writeln!(s, "required for size: {}", SIZE_TAGS.join(", "));
    let _ = writeln!(s);
    let _ = writeln!(s, "images missing each tag:");
    for tag in CHECKLIST {
        let _ = writeln!(s, "  {tag:<26} {}", report.missing_counts[tag]);
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "{}", gps.bbox_line());
    let _ = writeln!(s, "gps points: {}", gps.rows.len());
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "note: the white label is not used as a size reference; it is often \
         occluded by hands and tilted out of the leaf plane."
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "per image:");
    for img in &report.images {
        let _ = writeln!(
            s,
            "  {}: estimable={} missing=[{}]",
            img.filename,
            img.size_estimable,
            img.missing.join(", ")
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Minimal little-endian TIFF writer for unit tests.
    fn tiff_with_gps(lat: [(u32, u32); 3], lat_ref: u8) -> Vec<u8> {
        let mut b = b"II*\0".to_vec();
        b.extend(8u32.to_le_bytes());
        // IFD0: one entry, GPS pointer.
        b.extend(1u16.to_le_bytes());
        b.extend(tag::GPS_IFD.to_le_bytes());
        b.extend(4u16.to_le_bytes());
        b.extend(1u32.to_le_bytes());
        b.extend(26u32.to_le_bytes());
        b.extend(0u32.to_le_bytes());
        // GPS IFD at 26: two entries, then rational data at 26 + 2 + 24 + 4 = 56.
        assert_eq!(b.len(), 26);
        b.extend(2u16.to_le_bytes());
        b.extend(tag::GPS_LATITUDE_REF.to_le_bytes());
        b.extend(2u16.to_le_bytes());
        b.extend(2u32.to_le_bytes());
        b.extend([lat_ref, 0, 0, 0]);
        b.extend(tag::GPS_LATITUDE.to_le_bytes());
        b.extend(5u16.to_le_bytes());
        b.extend(3u32.to_le_bytes());
        b.extend(56u32.to_le_bytes());
        b.extend(0u32.to_le_bytes());
        for (n, d) in lat {
            b.extend(n.to_le_bytes());
            b.extend(d.to_le_bytes());
        }
        b
    }

    #[test]
    fn no_exif_is_all_null() {
        let (r, warn) = parse_exif("x.png", b"\x89PNG\r\n\x1a\n\0\0\0\0IEND\xaeB`\x82");
        assert!(r.is_all_null() && warn.is_none());
        let (r, _) = parse_exif("y.bin", b"hello");
        assert!(r.is_all_null());
    }

    #[test]
    fn gps_needs_longitude_too_for_export() {
        let (r, warn) = parse_exif("t.tif", &tiff_with_gps([(35, 1), (56, 1), (0, 1)], b'S'));
        assert!(warn.is_none());
        assert!((r.latitude_deg.unwrap() + (35.0 + 56.0 / 60.0)).abs() < 1e-12);
        assert!(r.longitude_deg.is_none());
        assert!(export_gps(&[r]).rows.is_empty());
    }

    #[test]
    fn truncated_tiff_is_malformed() {
        let mut t = tiff_with_gps([(35, 1), (56, 1), (0, 1)], b'N');
        t.truncate(60);
        let (r, warn) = parse_exif("t.tif", &t);
        assert!(r.is_all_null());
        assert!(warn.is_some());
    }

    #[test]
    fn zero_denominator_reads_absent() {
        let (r, _) = parse_exif("t.tif", &tiff_with_gps([(35, 0), (56, 1), (0, 1)], b'N'));
        assert!(r.latitude_deg.is_none());
    }

    fn sized() -> ExifRecord {
        ExifRecord {
            focal_length_mm: Rational::new(50, 1),
            focal_plane_x_res: Rational::new(1000, 1),
            focal_plane_y_res: Rational::new(1000, 1),
            focal_plane_unit: Some(FocalPlaneUnit::Cm),
            subject_distance_m: Rational::new(105, 100),
            ..ExifRecord::empty("s.jpg")
        }
    }

    #[test]
    fn leaf_size_formula() {
        let (w, h) = estimate_leaf_size(&sized(), (500.0, 250.0)).unwrap().unwrap();
        assert!((w - 10.0).abs() < 1e-6 && (h - 5.0).abs() < 1e-6);
        assert_eq!(estimate_leaf_size(&sized(), (0.0, 0.0)).unwrap(), Some((0.0, 0.0)));
        let no_distance = ExifRecord {
            subject_distance_m: None,
            ..sized()
        };
        assert_eq!(estimate_leaf_size(&no_distance, (500.0, 500.0)).unwrap(), None);
        let zero_f = ExifRecord {
            focal_length_mm: Rational::new(0, 1),
            ..sized()
        };
        assert!(estimate_leaf_size(&zero_f, (1.0, 1.0)).is_err());
        let inch = ExifRecord {
            focal_plane_unit: Some(FocalPlaneUnit::Inch),
            focal_plane_x_res: Rational::new(2540, 1),
            ..sized()
        };
        let (w, _) = estimate_leaf_size(&inch, (500.0, 0.0)).unwrap().unwrap();
        assert!((w - 10.0).abs() < 1e-9);
    }

    #[test]
    fn gps_bbox() {
        let at = |f: &str, lat, lon| ExifRecord {
            latitude_deg: Some(lat),
            longitude_deg: Some(lon),
            ..ExifRecord::empty(f)
        };
        let t = export_gps(&[at("a", 35.9, -84.3), ExifRecord::empty("b"), at("c", 35.8, -84.1)]);
        assert_eq!(t.rows.len(), 2);
        assert_eq!(
            t.bbox,
            Some(GpsBBox {
                min_lat: 35.8,
                max_lat: 35.9,
                min_lon: -84.3,
                max_lon: -84.1
            })
        );
        let same = export_gps(&[at("a", 1.0, 2.0), at("b", 1.0, 2.0)]);
        assert_eq!((same.bbox.unwrap().width(), same.bbox.unwrap().height()), (0.0, 0.0));
        let none = export_gps(&[]);
        assert!(none.bbox.is_none());
        assert_eq!(none.to_csv().unwrap(), "filename,latitude,longitude\n");
    }

    #[test]
    fn feasibility_counts() {
        let rep = feasibility(&[sized(), ExifRecord::empty("e.jpg")]);
        assert!(rep.images[0].size_estimable);
        assert!(!rep.images[1].size_estimable);
        assert_eq!(rep.missing_counts["SubjectDistance"], 1);
        assert_eq!(rep.missing_counts["GPSLatitude"], 2);
    }
}
