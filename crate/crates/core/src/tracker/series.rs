use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub step: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub run: String,
    pub name: String,
    pub points: Vec<Point>,
}

/// Inserts after every point with an equal or lower step, keeping the series
/// ordered by step and then by arrival.
pub(crate) fn insert_ordered(points: &mut Vec<Point>, point: Point) {
    let at = points.partition_point(|p| p.step <= point.step);
    points.insert(at, point);
}

/// Reduces `points` to at most `max_points` bucket means.
///
/// With `L` points and `N < L` buckets, the first `L mod N` buckets hold one
/// extra point. Each bucket reports its last step and the mean of its values.
pub fn downsample(points: &[Point], max_points: usize) -> Vec<Point> {
    let len = points.len();
    if max_points == 0 || len <= max_points {
        return points.to_vec();
    }
    let base = len / max_points;
    let extra = len % max_points;
    let mut out = Vec::with_capacity(max_points);
    let mut start = 0;
    for bucket in 0..max_points {
        let size = base + usize::from(bucket < extra);
        let slice = &points[start..start + size];
        let sum: f64 = slice.iter().map(|p| p.value).sum();
        out.push(Point {
            step: slice[size - 1].step,
            value: sum / size as f64,
        });
        start += size;
    }
    out
}
