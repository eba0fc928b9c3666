//! Builds all six architectures and prints parameter counts and output
//! shapes for both backbone presets.
//!
//!     cargo run --release --example architectures

use candle_core::{DType, Device, Tensor};
use lesionbench::config::Architecture;
use lesionbench::models::{build, BackboneSpec, ModelSpec};

fn main() -> lesionbench::Result<()> {
    for (preset, backbone, size) in [("compact", BackboneSpec::compact(), 64), ("resnet50", BackboneSpec::resnet50(), 64)] {
        println!("{preset} backbone, {size}x{size} input");
        let x = Tensor::zeros((1, 3, size, size), DType::F32, &Device::Cpu)?;
        for arch in Architecture::ALL {
            let model = build(&ModelSpec::with_backbone(arch, [size, size], backbone.clone()), 0)?;
            let y = model.forward(&x)?;
            println!(
                "  {:7} encoder {:>10}  decoder {:>10}  output {:?}",
                arch.display_name(),
                model.encoder_parameter_count(),
                model.decoder_parameter_count(),
                y.dims()
            );
        }
    }
    Ok(())
}
