//! Target regions and their text encoding.
//!
//! Coordinates are real-valued pixels with the origin at the top-left corner,
//! x growing right and y growing down.

use std::fmt;
use std::str::FromStr;

/// Special code: unknown or empty (frame not processed).
pub const SPECIAL_UNKNOWN: i32 = 0;
/// Special code: tracker (re)initialized on this frame.
pub const SPECIAL_INIT: i32 = 1;
/// Special code: tracking failure detected on this frame.
pub const SPECIAL_FAILURE: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Rectangle { x: f64, y: f64, w: f64, h: f64 },
    Polygon(Vec<Point>),
    Special(i32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegionKind {
    Rectangle,
    Polygon,
}

impl RegionKind {
    pub fn name(self) -> &'static str {
        match self {
            RegionKind::Rectangle => "rectangle",
            RegionKind::Polygon => "polygon",
        }
    }
}

impl fmt::Display for RegionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rectangle" => Ok(RegionKind::Rectangle),
            "polygon" => Ok(RegionKind::Polygon),
            other => Err(format!("unknown region kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegionError {
    #[error("bad region text {text:?}: {reason}")]
    BadRegionText { text: String, reason: String },
    #[error("special regions cannot be converted")]
    SpecialNotConvertible,
}

fn bad(text: &str, reason: impl Into<String>) -> RegionError {
    RegionError::BadRegionText {
        text: text.to_owned(),
        reason: reason.into(),
    }
}

impl Region {
    pub fn rectangle(x: f64, y: f64, w: f64, h: f64) -> Result<Self, RegionError> {
        let r = Region::Rectangle { x, y, w, h };
        if ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return Err(bad(&r.to_string(), "non-finite coordinate"));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(bad(&r.to_string(), "width and height must be positive"));
        }
        Ok(r)
    }

    pub fn polygon(points: Vec<Point>) -> Result<Self, RegionError> {
        let text = || Region::Polygon(points.clone()).to_string();
        if points.len() < 3 {
            return Err(bad(&text(), "polygon needs at least 3 points"));
        }
        if !points.iter().all(|p| p.x.is_finite() && p.y.is_finite()) {
            return Err(bad(&text(), "non-finite coordinate"));
        }
        let n = points.len();
        if (0..n).any(|i| points[i] == points[(i + 1) % n]) {
            return Err(bad(&text(), "consecutive points are identical"));
        }
        Ok(Region::Polygon(points))
    }

    pub fn is_special(&self) -> bool {
        matches!(self, Region::Special(_))
    }

    pub fn kind(&self) -> Option<RegionKind> {
        match self {
            Region::Rectangle { .. } => Some(RegionKind::Rectangle),
            Region::Polygon(_) => Some(RegionKind::Polygon),
            Region::Special(_) => None,
        }
    }

    /// Vertices in order; rectangles expand to their four corners.
    pub fn vertices(&self) -> Option<Vec<Point>> {
        match *self {
            Region::Rectangle { x, y, w, h } => Some(vec![
                Point::new(x, y),
                Point::new(x + w, y),
                Point::new(x + w, y + h),
                Point::new(x, y + h),
            ]),
            Region::Polygon(ref pts) => Some(pts.clone()),
            Region::Special(_) => None,
        }
    }

    /// Converts between rectangle and polygon form. A polygon becomes its
    /// axis-aligned bounding box.
    pub fn convert(&self, target: RegionKind) -> Result<Region, RegionError> {
        match (self, target) {
            (Region::Special(_), _) => Err(RegionError::SpecialNotConvertible),
            (Region::Rectangle { .. }, RegionKind::Rectangle)
            | (Region::Polygon(_), RegionKind::Polygon) => Ok(self.clone()),
            (Region::Rectangle { .. }, RegionKind::Polygon) => {
                Ok(Region::Polygon(self.vertices().expect("rectangle")))
            }
            (Region::Polygon(pts), RegionKind::Rectangle) => {
                let (min_x, max_x, min_y, max_y) = pts.iter().fold(
                    (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
                    |(a, b, c, d), p| (a.min(p.x), b.max(p.x), c.min(p.y), d.max(p.y)),
                );
                Ok(Region::Rectangle {
                    x: min_x,
                    y: min_y,
                    w: max_x - min_x,
                    h: max_y - min_y,
                })
            }
        }
    }
}

pub fn parse_region(text: &str) -> Result<Region, RegionError> {
    let tokens: Vec<&str> = text.split(',').map(str::trim).collect();
    if tokens.len() == 1 {
        return tokens[0]
            .parse::<i32>()
            .map(Region::Special)
            .map_err(|_| bad(text, "single value must be an integer code"));
    }
    let values = tokens
        .iter()
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(text, format!("non-numeric value {t:?}")))
        })
        .collect::<Result<Vec<f64>, _>>()?;
    match values.len() {
        4 => Region::rectangle(values[0], values[1], values[2], values[3])
            .map_err(|_| bad(text, "width and height must be positive")),
        n if n >= 6 && n % 2 == 0 => {
            let points = values.chunks(2).map(|c| Point::new(c[0], c[1])).collect();
            Region::polygon(points).map_err(|e| match e {
                RegionError::BadRegionText { reason, .. } => bad(text, reason),
                other => other,
            })
        }
        n => Err(bad(text, format!("unexpected value count {n}"))),
    }
}

/// Renders a coordinate with at most four fractional digits.
pub fn format_number(v: f64) -> String {
    let mut s = format!("{v:.4}");
    if s.contains('.') {
        let trimmed = s.trim_end_matches('0').trim_end_matches('.').len();
        s.truncate(trimmed);
    }
    if s == "-0" {
        s = "0".to_owned();
    }
    s
}

pub fn format_region(region: &Region) -> String {
    region.to_string()
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::Special(code) => write!(f, "{code}"),
            Region::Rectangle { x, y, w, h } => write!(
                f,
                "{},{},{},{}",
                format_number(*x),
                format_number(*y),
                format_number(*w),
                format_number(*h)
            ),
            Region::Polygon(points) => {
                for (i, p) in points.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{},{}", format_number(p.x), format_number(p.y))?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for Region {
    type Err = RegionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_region(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rect(x: f64, y: f64, w: f64, h: f64) -> Region {
        Region::rectangle(x, y, w, h).unwrap()
    }

    fn poly(pts: &[(f64, f64)]) -> Region {
        Region::polygon(pts.iter().map(|&(x, y)| Point::new(x, y)).collect()).unwrap()
    }

    #[test]
    fn parse_examples() {
        assert_eq!(parse_region("10,20,30,40").unwrap(), rect(10., 20., 30., 40.));
        assert_eq!(parse_region("2").unwrap(), Region::Special(2));
        assert_eq!(
            parse_region("0,0,4,0,4,3").unwrap(),
            poly(&[(0., 0.), (4., 0.), (4., 3.)])
        );
    }

    #[test]
    fn parse_errors() {
        for text in [
            "", "1.5", "a", "1,2", "1,2,3", "1,2,3,4,5", "1,2,3,4,5,6,7", "a,b,c,d",
            "0,0,0,5", "0,0,5,-1", "1,1,1,1,2,2", "0,0,1,0,1,1,0,0", "nan,0,1,1",
        ] {
            assert!(
                matches!(parse_region(text), Err(RegionError::BadRegionText { .. })),
                "{text:?} should fail"
            );
        }
    }

    #[test]
    fn format_examples() {
        assert_eq!(format_region(&rect(10., 20., 30., 40.)), "10,20,30,40");
        assert_eq!(format_region(&Region::Special(1)), "1");
        assert_eq!(format_region(&rect(0.5, 0., 1.25, 2.)), "0.5,0,1.25,2");
        assert_eq!(format_region(&rect(-0.00001, 1.0 / 3.0, 1., 1.)), "0,0.3333,1,1");
    }

    #[test]
    fn convert_examples() {
        let p = poly(&[(0., 0.), (4., 0.), (4., 3.)]);
        assert_eq!(p.convert(RegionKind::Rectangle).unwrap(), rect(0., 0., 4., 3.));
        assert_eq!(
            rect(1., 1., 2., 2.).convert(RegionKind::Polygon).unwrap(),
            poly(&[(1., 1.), (3., 1.), (3., 3.), (1., 3.)])
        );
        assert_eq!(
            rect(1., 1., 2., 2.).convert(RegionKind::Rectangle).unwrap(),
            rect(1., 1., 2., 2.)
        );
        assert_eq!(
            Region::Special(0).convert(RegionKind::Polygon),
            Err(RegionError::SpecialNotConvertible)
        );
    }

    fn arb_polygon() -> impl Strategy<Value = Region> {
        proptest::collection::vec((-500.0..500.0f64, -500.0..500.0f64), 3..10).prop_filter_map(
            "degenerate",
            |pts| Region::polygon(pts.into_iter().map(|(x, y)| Point::new(x, y)).collect()).ok(),
        )
    }

    proptest! {
        #[test]
        fn text_round_trip_rect(x in -1e4..1e4f64, y in -1e4..1e4f64, w in 0.01..1e4f64, h in 0.01..1e4f64) {
            let r = rect(x, y, w, h);
            let back = parse_region(&format_region(&r)).unwrap();
            let Region::Rectangle { x: bx, y: by, w: bw, h: bh } = back else { panic!() };
            for (a, b) in [(x, bx), (y, by), (w, bw), (h, bh)] {
                prop_assert!((a - b).abs() <= 0.5e-4 + 1e-9);
            }
        }

        #[test]
        fn text_round_trip_polygon(p in arb_polygon()) {
            let text = format_region(&p);
            // formatting is idempotent after one pass through the rounding
            let once = parse_region(&text);
            if let Ok(once) = once {
                prop_assert_eq!(format_region(&once), text);
                let (Region::Polygon(a), Region::Polygon(b)) = (&p, &once) else { panic!() };
                for (pa, pb) in a.iter().zip(b) {
                    prop_assert!((pa.x - pb.x).abs() <= 1e-4 && (pa.y - pb.y).abs() <= 1e-4);
                }
            }
        }

        #[test]
        fn bounding_box_contains_vertices(p in arb_polygon()) {
            let Region::Rectangle { x, y, w, h } = p.convert(RegionKind::Rectangle).unwrap() else { panic!() };
            for v in p.vertices().unwrap() {
                prop_assert!(v.x >= x && v.x <= x + w + 1e-9 && v.y >= y && v.y <= y + h + 1e-9);
            }
        }
    }
}
