mod common;

use std::collections::HashMap;

use common::fixture::{assert_matches_oracle, l_fixture, points, room};
use towerlearn::image::Image;
use towerlearn::paths::{gradient, render_episode, render_floor, CELL, DOOR, EXIT, FLOOR, GAP, KEY, WALL};
use towerlearn_core::env::{CellKind, EnvConfig, Pos, Theme};
use towerlearn_core::eval::EpisodeRecord;

#[test]
fn l_shaped_path_is_pixel_exact() {
    let (layout, path, colors) = l_fixture();
    let img = render_floor(&layout, &path);
    assert_matches_oracle(&img, &layout, &colors);
    assert_eq!(img.get(12 + 3, 12 + 3), [255, 0, 0]);
    assert_eq!(img.get(3 * 12 + 8, 2 * 12 + 8), [0, 0, 255]);
    assert_eq!(img.get(3 * 12, 2 * 12), EXIT);
    assert_eq!(img.get(12 + 2, 12 + 2), FLOOR);
    assert_eq!(img.get(0, 0), WALL);
}

#[test]
fn revisits_overwrite_and_landmarks_stay_visible() {
    let layout = room(6, 4, Pos::new(4, 2), &[(Pos::new(2, 2), CellKind::Key), (Pos::new(3, 1), CellKind::LockedDoor), (Pos::new(1, 2), CellKind::Gap)]);
    let path = [(1, 1), (2, 1), (2, 2), (2, 1), (3, 1), (4, 1), (4, 2)];
    let img = render_floor(&layout, &points(&path));
    let mut colors = HashMap::new();
    for (i, &c) in path.iter().enumerate() {
        colors.insert(c, gradient(i, path.len()));
    }
    assert_eq!(colors[&(2, 1)], gradient(3, 7));
    assert_matches_oracle(&img, &layout, &colors);
    assert_eq!(img.get(2 * 12, 2 * 12), KEY);
    assert_eq!(img.get(3 * 12, 12 + 6), DOOR);
    assert_eq!(img.get(12 + 1, 2 * 12 + 1), GAP);
}

#[test]
fn gradient_runs_from_red_to_blue() {
    assert_eq!(gradient(0, 1), [255, 0, 0]);
    assert_eq!(gradient(0, 2), [255, 0, 0]);
    assert_eq!(gradient(1, 2), [0, 0, 255]);
    assert_eq!(gradient(50, 101), [128, 0, 128]);
    for n in 2..50 {
        for i in 0..n {
            let [r, g, b] = gradient(i, n);
            assert_eq!(g, 0);
            assert!((i32::from(r) + i32::from(b) - 255).abs() <= 1);
        }
    }
}

#[test]
fn stationary_agent_marks_one_cell() {
    let layout = room(4, 4, Pos::new(2, 2), &[]);
    let img = render_floor(&layout, &points(&[(1, 1), (1, 1), (1, 1)]));
    assert_matches_oracle(&img, &layout, &HashMap::from([((1, 1), [0, 0, 255])]));
    let img = render_floor(&layout, &points(&[(1, 1)]));
    assert_matches_oracle(&img, &layout, &HashMap::from([((1, 1), [255, 0, 0])]));
}

#[test]
fn empty_recording_still_draws_the_first_floor() {
    let config = EnvConfig::default();
    let record = EpisodeRecord::new(3, Theme::Ancient, &config);
    let images = render_episode(&record, &config).unwrap();
    assert_eq!(images.len(), 1);
    assert_eq!(images[0].0, 0);
    assert_eq!(images[0].1.width % CELL as usize, 0);
}

#[test]
fn text_glyphs_have_fixed_footprints() {
    let mut img = Image::new(20, 10, [0, 0, 0]);
    img.text(1, 1, "1", 1, [255, 255, 255]);
    let lit: Vec<(usize, usize)> = (0..10).flat_map(|y| (0..20).map(move |x| (x, y))).filter(|&(x, y)| img.get(x, y) != [0, 0, 0]).collect();
    assert!(!lit.is_empty());
    assert!(lit.iter().all(|&(x, y)| (1..4).contains(&x) && (1..6).contains(&y)), "{lit:?}");
    let mut big = Image::new(20, 20, [0, 0, 0]);
    big.text(0, 0, "1", 2, [255, 255, 255]);
    let count = |im: &Image| im.pixels.chunks(3).filter(|p| p != &[0, 0, 0]).count();
    assert_eq!(count(&big), 4 * count(&img));
}
