use cir_web::{fusion_table, parse_branches, projection, stream_view};

#[test]
fn heatmap_has_one_cell_per_presence_entry() {
    let (svg, stats) = stream_view("S3", 2, false).unwrap();
    assert!(svg.starts_with("<svg"));
    let cells = svg.matches("data-class=").count();
    let summed: usize = stats
        .lines()
        .skip(1)
        .take_while(|l| !l.is_empty())
        .map(|l| l.split('\t').nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(cells, summed);
    assert!(stream_view("S9", 0, false).is_err());
}

#[test]
fn fusion_table_follows_the_settings() {
    let b = parse_branches("0=2 1=0 | 1\n# comment\n\n2=1 | 4").unwrap();
    assert_eq!(b.len(), 2);
    let rows = fusion_table(&b).unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r.setting).collect();
    assert_eq!(names, ["only_mean", "+entropy", "+n_c", "+feature_norm"]);
    // Raw mean: class 0 wins with 2 against 1.
    assert_eq!(rows[0].scores, vec![Some(2.0), Some(0.0), Some(1.0)]);
    assert_eq!(rows[0].label, 0);
    // A single-class branch has zero entropy, floored, so it dominates.
    assert_eq!(rows[1].label, 2);
    assert!(parse_branches("0=1").is_err());
    assert!(parse_branches("0=1 0=2 | 1").is_err());
    assert!(parse_branches("").is_err());
}

#[test]
fn projection_round_trips_and_handles_unknown_targets() {
    let (there, back) = projection("1, 2", "0, 0", "1, 2", "10, -1", "2, 0.5").unwrap();
    assert_eq!(there, vec![12.0, -0.5]);
    let back = back.unwrap();
    assert!((back[0] - 1.0).abs() < 1e-12 && (back[1] - 2.0).abs() < 1e-12);
    let (unknown, none) = projection("1, 2", "0, 0", "1, 2", "", "").unwrap();
    assert_eq!(unknown, vec![1.0, 1.0]);
    assert!(none.is_none());
    assert!(projection("1", "0, 0", "1", "", "").is_err());
}
