//! Compare backpropagated gradients of both learned modules with central
//! finite differences.

use crowdtrack::geometry::{BBox, Offset};
use crowdtrack::interaction::{FrameDims, InteractionConfig, InteractionInput, InteractionModel};
use crowdtrack::nnet::{grad_check, Tensor};
use crowdtrack::refind::{RefindConfig, RefindModel};
use crowdtrack::training::{corr_loss, intr_loss};

fn main() -> crowdtrack::Result<()> {
    let dims = FrameDims::new(1280.0, 720.0);
    let model = InteractionModel::new(InteractionConfig::default(), 7)?;
    let rows = [
        (1, BBox::new(300.0, 300.0, 30.0, 75.0), Offset::new(2.0, 0.5, 0.0, 0.1)),
        (2, BBox::new(340.0, 310.0, 28.0, 70.0), Offset::new(-1.5, 0.0, 0.1, 0.0)),
        (3, BBox::new(600.0, 200.0, 32.0, 80.0), Offset::new(0.0, 2.5, 0.0, 0.0)),
    ];
    let input = InteractionInput::from_rows(&rows, dims, model.config.offset_scale)?;
    let target = Tensor::from_rows(&[
        dims.normalize_box(&BBox::new(302.5, 300.4, 30.0, 75.0)),
        dims.normalize_box(&BBox::new(338.4, 310.2, 28.1, 70.0)),
        dims.normalize_box(&BBox::new(600.2, 202.6, 32.0, 80.0)),
    ])?;
    let report = grad_check(&model.params, 1e-5, |g, p| {
        let (vars, _) = model.forward(g, p, &input)?;
        intr_loss(g, vars.coords, &target)
    })?;
    println!(
        "interaction: max relative error {:.2e} at {}[{}], {} entries checked, {} across a kink",
        report.max_rel_error, report.worst_param, report.worst_index, report.checked, report.skipped
    );

    let refind = RefindModel::new(
        RefindConfig {
            dim: 8,
            time_channels: vec![4, 8],
            window: 6,
            ..RefindConfig::default()
        },
        3,
    )?;
    let window = Tensor::from_rows(
        &(0..6)
            .map(|k| [(10 - k) as f64 / 120.0, 0.3 + 0.002 * k as f64, 0.4, 0.02, 0.1])
            .collect::<Vec<_>>(),
    )?;
    let pairs = [(0, [0.0, 0.32, 0.41, 0.02, 0.1]), (0, [0.0, 0.7, 0.2, 0.03, 0.12])];
    let report = grad_check(&refind.params, 1e-5, |g, p| {
        let scores = refind.forward_pairs(g, p, std::slice::from_ref(&window), &pairs)?;
        corr_loss(g, scores, &[1.0, 0.0])
    })?;
    println!(
        "refind: max relative error {:.2e} at {}[{}], {} entries checked",
        report.max_rel_error, report.worst_param, report.worst_index, report.checked
    );
    Ok(())
}
