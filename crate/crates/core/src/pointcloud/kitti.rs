//! KITTI velodyne binary layout: little-endian `f32` quadruples `(x, y, z, intensity)`, no header.

use super::{azimuth_fraction_from, IndexedPoint, PointCloudError, RawPoint, Ring, Scan, SensorConfig};

/// Counters for points dropped during ingestion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub total: usize,
    pub non_finite: usize,
    pub out_of_range: usize,
    pub on_axis: usize,
    pub duplicate_azimuth: usize,
}

impl IngestStats {
    pub fn kept(&self) -> usize {
        self.total - self.non_finite - self.out_of_range - self.on_axis - self.duplicate_azimuth
    }
}

pub fn write_kitti_bin(points: &[RawPoint]) -> Vec<u8> {
    let mut out = Vec::with_capacity(points.len() * 16);
    for p in points {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn decode(bytes: &[u8]) -> Result<Vec<RawPoint>, PointCloudError> {
    if !bytes.len().is_multiple_of(16) {
        return Err(PointCloudError::Format(bytes.len()));
    }
    let f = |b: &[u8]| f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
    Ok(bytes
        .chunks_exact(16)
        .map(|c| RawPoint {
            x: f(&c[0..4]),
            y: f(&c[4..8]),
            z: f(&c[8..12]),
            intensity: f(&c[12..16]),
        })
        .collect())
}

/// Decodes a velodyne buffer and buckets the returns into rings.
///
/// Each point goes to the ring with the nearest configured elevation. Azimuth
/// fractions are measured from the first retained point's azimuth since the
/// format carries no timestamps. Within a ring, points with an azimuth
/// fraction equal to an earlier point's are dropped.
pub fn read_kitti_bin(
    bytes: &[u8],
    config: &SensorConfig,
) -> Result<(Scan, IngestStats), PointCloudError> {
    config.validate()?;
    let raw = decode(bytes)?;
    let mut stats = IngestStats {
        total: raw.len(),
        ..Default::default()
    };
    let mut scan = Scan::empty(0, config.ring_count());
    let mut start_azimuth = None;
    let mut buckets: Vec<Vec<IndexedPoint>> = vec![Vec::new(); config.ring_count()];

    for rp in &raw {
        if !(rp.x.is_finite() && rp.y.is_finite() && rp.z.is_finite()) {
            stats.non_finite += 1;
            continue;
        }
        let p = rp.position();
        let range = p.norm();
        if !(range >= config.min_range && range <= config.max_range) {
            stats.out_of_range += 1;
            continue;
        }
        if p.x == 0.0 && p.y == 0.0 {
            stats.on_axis += 1;
            continue;
        }
        let start = *start_azimuth.get_or_insert_with(|| p.y.atan2(p.x));
        let s = azimuth_fraction_from(&p, start, config.rotation)?;
        let elevation = p.z.atan2(p.x.hypot(p.y));
        let ring = config.nearest_ring(elevation);
        buckets[ring].push(IndexedPoint {
            position: p,
            ring,
            column: 0,
            azimuth_fraction: s,
        });
    }

    for (ring, mut pts) in buckets.into_iter().enumerate() {
        // stable: among equal fractions the first-read point survives
        pts.sort_by(|a, b| a.azimuth_fraction.total_cmp(&b.azimuth_fraction));
        let before = pts.len();
        pts.dedup_by(|later, earlier| later.azimuth_fraction == earlier.azimuth_fraction);
        stats.duplicate_azimuth += before - pts.len();
        for (n, p) in pts.iter_mut().enumerate() {
            p.column = n;
        }
        scan.rings[ring] = Ring {
            column_count: pts.len(),
            points: pts,
        };
    }
    Ok((scan, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SensorConfig {
        SensorConfig::vlp16(1800)
    }

    #[test]
    fn empty_buffer_gives_empty_rings() {
        let (scan, stats) = read_kitti_bin(&[], &cfg()).unwrap();
        assert_eq!(scan.ring_count(), 16);
        assert!(scan.is_empty());
        assert_eq!(stats.total, 0);
    }

    #[test]
    fn rejects_truncated_buffer() {
        assert_eq!(
            read_kitti_bin(&[0u8; 17], &cfg()),
            Err(PointCloudError::Format(17))
        );
    }

    #[test]
    fn single_point_lands_in_horizontal_ring() {
        let bytes = write_kitti_bin(&[RawPoint {
            x: 1.0,
            y: 0.0,
            z: 0.0,
            intensity: 0.5,
        }]);
        assert_eq!(bytes.len(), 16);
        let cfg = SensorConfig::uniform(3, -1.0, 1.0, 360);
        let (scan, _) = read_kitti_bin(&bytes, &cfg).unwrap();
        assert_eq!(scan.len(), 1);
        assert_eq!(scan.rings[1].points.len(), 1);
        let p = scan.rings[1].points[0];
        assert_eq!(p.position.x, 1.0);
        assert_eq!(p.azimuth_fraction, 0.0);
    }

    #[test]
    fn drops_nan_and_out_of_range() {
        let pts = [
            RawPoint { x: f32::NAN, y: 1.0, z: 0.0, intensity: 0.0 },
            RawPoint { x: 0.1, y: 0.0, z: 0.0, intensity: 0.0 },
            RawPoint { x: 500.0, y: 0.0, z: 0.0, intensity: 0.0 },
            RawPoint { x: 5.0, y: 1.0, z: 0.0, intensity: 0.0 },
        ];
        let (scan, stats) = read_kitti_bin(&write_kitti_bin(&pts), &cfg()).unwrap();
        assert_eq!(scan.len(), 1);
        assert_eq!(stats.non_finite, 1);
        assert_eq!(stats.out_of_range, 2);
        assert_eq!(stats.kept(), 1);
        for p in scan.points() {
            let r = p.position.norm();
            assert!(r >= cfg().min_range && r <= cfg().max_range);
        }
    }

    #[test]
    fn rings_are_sorted_by_azimuth() {
        let pts: Vec<RawPoint> = [3.0f32, 1.0, 2.0, 0.5]
            .iter()
            .map(|&a| RawPoint {
                x: 10.0 * a.cos(),
                y: 10.0 * a.sin(),
                z: 0.0,
                intensity: 0.0,
            })
            .collect();
        let (scan, _) = read_kitti_bin(&write_kitti_bin(&pts), &cfg()).unwrap();
        let ring = scan.rings.iter().find(|r| !r.points.is_empty()).unwrap();
        assert_eq!(ring.column_count, 4);
        assert!(ring
            .points
            .windows(2)
            .all(|w| w[1].azimuth_fraction > w[0].azimuth_fraction));
        assert_eq!(ring.points[0].azimuth_fraction, 0.0);
        assert_eq!(
            ring.points.iter().map(|p| p.column).collect::<Vec<_>>(),
            vec![0, 1, 2, 3]
        );
    }
}
