use depth_contours::losses::{depth_normal_consensus, NormalConvention};
use depth_contours::synth::{depth_step_contours, random_scene, render};
use depth_contours::edges::EdgeMap;
use proptest::prelude::*;

fn brute_steps(depth: &depth_contours::DepthGrid, threshold: f64) -> EdgeMap {
    let (w, h) = (depth.width() as i64, depth.height() as i64);
    EdgeMap::from_fn(depth.width(), depth.height(), |x, y| {
        if !depth.is_valid(x, y) {
            return false;
        }
        let d = depth.get(x, y);
        [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)].iter().any(|&(dx, dy)| {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            nx >= 0 && ny >= 0 && nx < w && ny < h && {
                let (nx, ny) = (nx as usize, ny as usize);
                depth.is_valid(nx, ny) && depth.get(nx, ny) > d + threshold
            }
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rendered_scenes_are_self_consistent(seed in any::<u64>(), w in 48usize..100, h in 48usize..90) {
        let spec = random_scene(seed, w, h).unwrap();
        let t = render(&spec).unwrap();
        prop_assert_eq!(&t.contours, &brute_steps(&t.depth, t.gap_threshold));
        prop_assert_eq!(&t.contours, &depth_step_contours(&t.depth, t.gap_threshold));
        let r = depth_normal_consensus(&t.depth, t.normals.grid(), NormalConvention::CameraFacing).unwrap();
        prop_assert!(r.value.abs() <= 1e-9);
        let again = render(&spec).unwrap();
        prop_assert_eq!(again.depth, t.depth);
        prop_assert_eq!(again.normals, t.normals);
        prop_assert_eq!(again.contours, t.contours);
    }
}
