//! Minimum-cost assignment on a rectangular IoU cost matrix with
//! forbidden pairs.

use crowdtrack::assign::{assign, FORBIDDEN};
use crowdtrack::geometry::{iou, BBox};
use crowdtrack::nnet::Tensor;

fn main() -> crowdtrack::Result<()> {
    let predictions = [
        BBox::new(100.0, 100.0, 40.0, 100.0),
        BBox::new(160.0, 100.0, 40.0, 100.0),
        BBox::new(500.0, 300.0, 40.0, 100.0),
    ];
    let detections = [
        BBox::new(150.0, 102.0, 40.0, 100.0),
        BBox::new(108.0, 98.0, 40.0, 100.0),
        BBox::new(900.0, 500.0, 40.0, 100.0),
        BBox::new(505.0, 305.0, 42.0, 98.0),
    ];
    let reject = 0.2;
    let cost: Vec<Vec<f64>> = predictions
        .iter()
        .map(|p| {
            detections
                .iter()
                .map(|d| {
                    let o = iou(p, d);
                    if o < reject {
                        FORBIDDEN
                    } else {
                        1.0 - o
                    }
                })
                .collect()
        })
        .collect();
    let a = assign(&Tensor::from_rows(&cost)?);
    for (r, c) in &a.pairs {
        println!("track {r} <- detection {c} (IoU {:.3})", 1.0 - cost[*r][*c]);
    }
    println!(
        "unmatched tracks {:?}, unmatched detections {:?}",
        a.unassigned_rows, a.unassigned_cols
    );
    Ok(())
}
