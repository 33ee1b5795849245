use nodepred::model::LayerKind;
use nodepred::nn::GradCheckConfig;
use nodepred::pipeline::{gradient_check, GradcheckSpec};

fn check(spec: GradcheckSpec) -> nodepred::nn::GradCheckReport {
    gradient_check(&spec, &GradCheckConfig::default(), None).unwrap()
}

#[test]
fn two_layer_sage_and_gcn_pass() {
    for kind in [LayerKind::Sage, LayerKind::Gcn] {
        let report = check(GradcheckSpec {
            layer_kind: kind,
            num_layers: 2,
            seed: 1,
            ..GradcheckSpec::default()
        });
        assert!(report.passed(), "{kind}: {report:?}");
        assert!(report.max_rel_error < 1e-4);
        assert!(report.checked > 100);
    }
}

#[test]
fn five_layer_sage_passes_with_and_without_normalisation() {
    for normalize in [true, false] {
        let report = check(GradcheckSpec {
            normalize_after_relu: normalize,
            seed: 2,
            ..GradcheckSpec::default()
        });
        assert!(report.passed(), "normalize={normalize}: {report:?}");
    }
}

#[test]
fn five_layer_gcn_passes() {
    let report = check(GradcheckSpec {
        layer_kind: LayerKind::Gcn,
        seed: 3,
        ..GradcheckSpec::default()
    });
    assert!(report.passed(), "{report:?}");
}

#[test]
fn zero_features_still_pass() {
    let report = check(GradcheckSpec {
        zero_features: true,
        num_layers: 2,
        seed: 4,
        ..GradcheckSpec::default()
    });
    assert!(report.passed(), "{report:?}");
}

#[test]
fn one_layer_tiny_model_passes() {
    let report = check(GradcheckSpec {
        num_layers: 1,
        embed_dim: 4,
        seed: 5,
        ..GradcheckSpec::default()
    });
    assert!(report.passed(), "{report:?}");
}

#[test]
fn corrupted_gradient_is_caught() {
    let spec = GradcheckSpec {
        num_layers: 2,
        seed: 6,
        ..GradcheckSpec::default()
    };
    let report = gradient_check(&spec, &GradCheckConfig::default(), Some(0.05)).unwrap();
    assert!(!report.passed());
    assert!(report.failures.iter().all(|f| f.param == "gnn.0.w_self"));
}
