//! Builders for the two network layouts.
//!
//! Stage labels and per-stage output dimensions mirror the layout tables
//! row for row, so `shape_trace()` can be compared against transcribed
//! fixtures. Every convolution uses a filter size of 23 except the residual
//! stack's 1x1 entry convolution; all downsampling is pooling.

use crate::error::{Error, Result};
use crate::nn::{BatchNorm, Conv1d, Dense, Layer, ModelGraph, Real, Stage};

/// Filter size shared by all full-width convolutions.
pub const CONV_KERNEL: usize = 23;

/// Input geometry common to both models.
pub const INPUT_CHANNELS: usize = 2;
pub const INPUT_LEN: usize = 1024;

fn check_classes(num_classes: usize) -> Result<()> {
    if num_classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "a classifier needs at least 2 classes, got {num_classes}"
        )));
    }
    Ok(())
}

/// One residual unit: two conv/BN/ReLU passes added back onto the input.
fn residual_unit<F: Real>() -> Result<Layer<F>> {
    Ok(Layer::Residual {
        body: vec![
            Layer::Conv1d(Conv1d::new(32, 32, CONV_KERNEL)?),
            Layer::BatchNorm(BatchNorm::new(32)),
            Layer::Relu,
            Layer::Conv1d(Conv1d::new(32, 32, CONV_KERNEL)?),
            Layer::BatchNorm(BatchNorm::new(32)),
            Layer::Relu,
        ],
    })
}

/// Residual stack: 1x1 conv to 32 channels, BN, ReLU, two residual units,
/// then max pooling that halves the length.
fn residual_stack<F: Real>(in_ch: usize) -> Result<Stage<F>> {
    Ok(Stage {
        label: "Residual Stack".into(),
        layers: vec![
            Layer::Conv1d(Conv1d::new(in_ch, 32, 1)?),
            Layer::BatchNorm(BatchNorm::new(32)),
            Layer::Relu,
            residual_unit()?,
            residual_unit()?,
            Layer::MaxPool2,
        ],
    })
}

/// The residual network: six stacks from 2 x 1024 down to 32 x 16, then a
/// three-stage fully connected head with 50% dropout and SELU.
pub fn build_resnet<F: Real>(num_classes: usize) -> Result<ModelGraph<F>> {
    check_classes(num_classes)?;
    let mut stages = Vec::with_capacity(9);
    stages.push(residual_stack(INPUT_CHANNELS)?);
    for _ in 1..6 {
        stages.push(residual_stack(32)?);
    }
    stages.push(Stage {
        label: "Drop(50%)/FC/SELU".into(),
        layers: vec![
            Layer::Flatten,
            Layer::Dropout { rate: 0.5 },
            Layer::Dense(Dense::new(32 * 16, 128)),
            Layer::Selu,
        ],
    });
    stages.push(Stage {
        label: "Drop(50%)/FC/SELU".into(),
        layers: vec![
            Layer::Dropout { rate: 0.5 },
            Layer::Dense(Dense::new(128, 128)),
            Layer::Selu,
        ],
    });
    stages.push(Stage {
        label: "Drop(50%)/FC/SoftMax".into(),
        layers: vec![Layer::Dropout { rate: 0.5 }, Layer::Dense(Dense::new(128, num_classes))],
    });
    Ok(ModelGraph {
        id: "resnet".into(),
        input_channels: INPUT_CHANNELS,
        input_len: INPUT_LEN,
        num_classes,
        stages,
    })
}

/// The plain convolutional network: six conv/BN/ReLU blocks with channel
/// widths 16, 24, 32, 48, 64, 96, max pooling after the first five, global
/// average pooling, and a no-op-dropout softmax head.
pub fn build_cnn<F: Real>(num_classes: usize) -> Result<ModelGraph<F>> {
    check_classes(num_classes)?;
    let widths = [16usize, 24, 32, 48, 64, 96];
    let mut stages = Vec::new();
    let mut in_ch = INPUT_CHANNELS;
    for (block, &out_ch) in widths.iter().enumerate() {
        stages.push(Stage {
            label: "Conv".into(),
            layers: vec![Layer::Conv1d(Conv1d::new(in_ch, out_ch, CONV_KERNEL)?)],
        });
        stages.push(Stage {
            label: "Batch Normalization".into(),
            layers: vec![Layer::BatchNorm(BatchNorm::new(out_ch))],
        });
        stages.push(Stage { label: "ReLU".into(), layers: vec![Layer::Relu] });
        if block < 5 {
            stages.push(Stage { label: "Maximum Pooling".into(), layers: vec![Layer::MaxPool2] });
        }
        in_ch = out_ch;
    }
    stages.push(Stage { label: "Average Pooling".into(), layers: vec![Layer::GlobalAvgPool] });
    stages.push(Stage {
        label: "Drop(0%)/FC/SoftMax".into(),
        layers: vec![Layer::Dropout { rate: 0.0 }, Layer::Dense(Dense::new(96, num_classes))],
    });
    Ok(ModelGraph {
        id: "cnn".into(),
        input_channels: INPUT_CHANNELS,
        input_len: INPUT_LEN,
        num_classes,
        stages,
    })
}

/// Build a model by its checkpointed id.
pub fn build_by_id<F: Real>(id: &str, num_classes: usize) -> Result<ModelGraph<F>> {
    match id {
        "resnet" => build_resnet(num_classes),
        "cnn" => build_cnn(num_classes),
        other => Err(Error::InvalidArgument(format!("unknown model id {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_he_uniform, softmax_rows, Tensor};

    #[test]
    fn resnet_trace_matches_table_fixture() {
        let g = build_resnet::<f64>(6).unwrap();
        let trace = g.shape_trace().unwrap();
        let fixture: Vec<(&str, &str)> = vec![
            ("Input", "2 x 1024"),
            ("Residual Stack", "32 x 512"),
            ("Residual Stack", "32 x 256"),
            ("Residual Stack", "32 x 128"),
            ("Residual Stack", "32 x 64"),
            ("Residual Stack", "32 x 32"),
            ("Residual Stack", "32 x 16"),
            ("Drop(50%)/FC/SELU", "128"),
            ("Drop(50%)/FC/SELU", "128"),
            ("Drop(50%)/FC/SoftMax", "6"),
        ];
        let got: Vec<(&str, &str)> =
            trace.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        assert_eq!(got, fixture);
    }

    #[test]
    fn cnn_trace_matches_table_fixture() {
        let g = build_cnn::<f64>(6).unwrap();
        let trace = g.shape_trace().unwrap();
        let fixture: Vec<(&str, &str)> = vec![
            ("Input", "2 x 1024"),
            ("Conv", "16 x 1024"),
            ("Batch Normalization", "16 x 1024"),
            ("ReLU", "16 x 1024"),
            ("Maximum Pooling", "16 x 512"),
            ("Conv", "24 x 512"),
            ("Batch Normalization", "24 x 512"),
            ("ReLU", "24 x 512"),
            ("Maximum Pooling", "24 x 256"),
            ("Conv", "32 x 256"),
            ("Batch Normalization", "32 x 256"),
            ("ReLU", "32 x 256"),
            ("Maximum Pooling", "32 x 128"),
            ("Conv", "48 x 128"),
            ("Batch Normalization", "48 x 128"),
            ("ReLU", "48 x 128"),
            ("Maximum Pooling", "48 x 64"),
            ("Conv", "64 x 64"),
            ("Batch Normalization", "64 x 64"),
            ("ReLU", "64 x 64"),
            ("Maximum Pooling", "64 x 32"),
            ("Conv", "96 x 32"),
            ("Batch Normalization", "96 x 32"),
            ("ReLU", "96 x 32"),
            ("Average Pooling", "96"),
            ("Drop(0%)/FC/SoftMax", "6"),
        ];
        let got: Vec<(&str, &str)> =
            trace.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        assert_eq!(got, fixture);
    }

    #[test]
    fn parameter_counts_match_closed_form() {
        // Residual network, worked out per layer:
        //   unit = 2 * (conv 32*32*23 + 32 bias + BN 2*32)
        //   stack(in) = 1x1 conv (32*in + 32) + BN 64 + 2 units
        //   head = (512*128 + 128) + (128*128 + 128) + (128*C + C)
        let unit = 2 * (32 * 32 * 23 + 32 + 64);
        let stack = |in_ch: usize| (32 * in_ch + 32) + 64 + 2 * unit;
        let c = 6;
        let resnet_expected =
            stack(2) + 5 * stack(32) + (512 * 128 + 128) + (128 * 128 + 128) + (128 * c + c);
        assert_eq!(build_resnet::<f64>(c).unwrap().param_count(), resnet_expected);

        // Plain CNN: conv + bias + BN(2*ch) per block, then the head FC.
        let widths = [16usize, 24, 32, 48, 64, 96];
        let mut cnn_expected = 0;
        let mut in_ch = 2;
        for &w in &widths {
            cnn_expected += w * in_ch * 23 + w + 2 * w;
            in_ch = w;
        }
        cnn_expected += 96 * c + c;
        assert_eq!(build_cnn::<f64>(c).unwrap().param_count(), cnn_expected);
    }

    #[test]
    fn class_counts_below_two_rejected() {
        assert!(build_resnet::<f32>(1).is_err());
        assert!(build_cnn::<f32>(0).is_err());
        assert!(build_resnet::<f32>(2).is_ok());
        assert!(build_cnn::<f32>(8).is_ok());
    }

    #[test]
    fn zeroed_unit_branches_make_each_unit_identity() {
        let mut g = build_resnet::<f64>(6).unwrap();
        init_he_uniform(&mut g, 3);
        // Force every residual branch to produce zero: conv weights/biases 0,
        // BN gamma and beta 0.
        let mut units = 0;
        for stage in &mut g.stages {
            for layer in &mut stage.layers {
                if let Layer::Residual { body } = layer {
                    units += 1;
                    for sub in body {
                        match sub {
                            Layer::Conv1d(conv) => {
                                conv.weight.fill(0.0);
                                conv.bias.fill(0.0);
                            }
                            Layer::BatchNorm(bn) => {
                                bn.gamma.fill(0.0);
                                bn.beta.fill(0.0);
                            }
                            _ => {}
                        }
                    }
                }
            }
        }
        assert_eq!(units, 12);
        // With identity units, each stack is conv1x1/BN/ReLU/pool; just check
        // a unit in isolation passes its input through (ReLU of zero branch
        // output is zero, so the addition returns the input).
        for stage in &g.stages {
            for layer in &stage.layers {
                if let Layer::Residual { body } = layer {
                    let x = Tensor::from_vec(
                        &[1, 32, 16],
                        (0..32 * 16).map(|i| (i as f64 * 0.123).sin()).collect(),
                    )
                    .unwrap();
                    let probe = ModelGraph {
                        id: "unit".into(),
                        input_channels: 32,
                        input_len: 16,
                        num_classes: 2,
                        stages: vec![Stage {
                            label: "unit".into(),
                            layers: vec![Layer::Residual { body: body.clone() }],
                        }],
                    };
                    let y = probe.forward_infer(x.clone()).unwrap();
                    assert_eq!(y.data(), x.data());
                }
            }
        }
    }

    #[test]
    fn zero_input_infer_gives_uniform_softmax() {
        for id in ["cnn", "resnet"] {
            let mut g = build_by_id::<f64>(id, 6).unwrap();
            init_he_uniform(&mut g, 11);
            let x = Tensor::zeros(&[2, 2, 1024]);
            let logits = g.forward_infer(x).unwrap();
            let p = softmax_rows(&logits).unwrap();
            for &v in p.data() {
                assert!(
                    (v - 1.0 / 6.0).abs() < 1e-9,
                    "{id}: softmax of zero input {v} not uniform"
                );
            }
        }
    }

    #[test]
    fn forward_shapes_run_end_to_end() {
        for id in ["cnn", "resnet"] {
            let mut g = build_by_id::<f32>(id, 6).unwrap();
            init_he_uniform(&mut g, 1);
            let x = Tensor::from_vec(
                &[2, 2, 1024],
                (0..2 * 2 * 1024).map(|i| (i as f32 * 0.01).sin()).collect(),
            )
            .unwrap();
            let y = g.forward_infer(x).unwrap();
            assert_eq!(y.shape(), &[2, 6]);
            assert!(y.is_finite());
        }
    }

    #[test]
    fn unknown_model_id_rejected() {
        assert!(build_by_id::<f32>("mlp", 6).is_err());
    }
}
