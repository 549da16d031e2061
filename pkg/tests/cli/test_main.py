import numpy as np
import pytest  # type: ignore

from bdrylib.attack.iattack import DAttackConfig, EAttackMethod
from bdrylib.attack.search import format_attack_configs
from bdrylib.attribution import (
    DAttributionMap,
    EAttrMethod,
    load_attribution,
    save_attribution,
)
from bdrylib.cli.main import (
    EXPERIMENTS,
    _experiment_defaults,
    build_parser,
    main,
)
from bdrylib.config import ECHO_NAME, read_config
from bdrylib.experiments.dataset import synth_dataset
from bdrylib.experiments.sensitivity import build_polarity_detector
from bdrylib.metrics import DBoundingBox, write_boxes
from bdrylib.proto.netformat import load_model, save_model
from bdrylib.proto.tensorformat import load_tensor, save_tensor

X = [0.6, 0.2]


@pytest.fixture
def files(tmp_path, diag_net):
    model = tmp_path / "diag.bnet"
    save_model(diag_net, model)
    x = tmp_path / "x.bten"
    save_tensor(np.array(X), x)
    attacks = tmp_path / "attacks.txt"
    cfg = DAttackConfig(EAttackMethod.PGD, epsilons=(0.5, 1.0, 2.0))
    attacks.write_text(format_attack_configs([cfg]))
    return {"model": str(model), "input": str(x), "attacks": str(attacks)}


def test_main_parser():
    args = build_parser().parse_args(["boundary", "--model", "m.bnet"])
    assert args.command == "boundary"
    assert args.model == "m.bnet"
    assert args.attacks is None
    assert args.threads == 1

    args = build_parser().parse_args(
        ["experiment", "smoothing", "--sigmas", "0, 0.5", "--models", "a,b"]
    )
    assert args.experiment == "smoothing"
    assert args.sigmas == [0.0, 0.5]
    assert args.models == ["a", "b"]


def test_main_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.startswith("bdry ")


def test_main_attribute(tmp_path, files, diag_net):
    out = tmp_path / "out"
    argv = ["attribute", "--model", files["model"], "--input", files["input"]]
    assert main(argv + ["--out", str(out), "--method", "gti"]) == 0

    amap = load_attribution(out / "x-gti.bten")
    assert amap.method is EAttrMethod.GTI
    assert amap.target_class == 0
    assert np.allclose(amap.values, [0.6, 0.0])

    echo = read_config(out / ECHO_NAME)
    assert echo["command"] == "attribute"
    assert echo["method"] == "gti"
    assert "out" not in echo
    assert "threads" not in echo


def test_main_attribute_boundary(tmp_path, files):
    out = tmp_path / "out"
    argv = ["attribute", "--model", files["model"], "--input", files["input"]]
    argv += ["--attacks", files["attacks"], "--method", "bsm"]
    assert main(argv + ["--out", str(out)]) == 0

    amap = load_attribution(out / "x-bsm.bten")
    assert amap.method is EAttrMethod.BSM
    assert np.linalg.norm(amap.values) == pytest.approx(1.0)


def test_main_attribute_config_file(tmp_path, files):
    out = tmp_path / "out"
    conf = tmp_path / "run.txt"
    conf.write_text(
        "command = attribute\n"
        f"model = {files['model']}\n"
        f"input = {files['input']}\n"
        "method = ig\n"
        "steps = 8\n"
    )
    assert main(["attribute", "--config", str(conf), "--out", str(out)]) == 0
    assert read_config(out / ECHO_NAME)["steps"] == 8

    # flags win over the file
    argv = ["attribute", "--config", str(conf), "--out", str(out)]
    assert main(argv + ["--steps", "4"]) == 0
    assert read_config(out / ECHO_NAME)["steps"] == 4


def test_main_errors(tmp_path, files):
    out = str(tmp_path / "out")

    # missing model
    assert main(["attribute", "--out", out]) == 1

    # config written for another command
    conf = tmp_path / "run.txt"
    conf.write_text("command = boundary\n")
    assert main(["attribute", "--config", str(conf), "--out", out]) == 1

    # unknown key in the config file
    conf.write_text("command = attribute\ncolor = red\n")
    assert main(["attribute", "--config", str(conf), "--out", out]) == 1

    # missing input file
    argv = ["attribute", "--model", files["model"], "--input", "none.bten"]
    assert main(argv + ["--out", out]) == 1

    # smoothing needs a model
    assert main(["experiment", "smoothing", "--out", out]) == 1


def test_main_boundary(tmp_path, files):
    out = tmp_path / "out"
    argv = ["boundary", "--model", files["model"], "--input", files["input"]]
    argv += ["--attacks", files["attacks"], "--out", str(out)]
    assert main(argv) == 0

    record = read_config(out / "x-boundary.txt")
    assert record["success"] is True
    assert record["method"] == "pgd"
    assert record["distance"] == pytest.approx(0.4 / np.sqrt(2.0), abs=1e-4)
    adv = load_tensor(out / "x-adv.bten")
    assert adv[0] == pytest.approx(adv[1], abs=1e-4)


def test_main_evaluate(tmp_path):
    maps = tmp_path / "maps"
    maps.mkdir()
    values = np.zeros((1, 4, 4))
    values[0, 1, 1] = 1.0
    values[0, 3, 3] = 1.0
    for iid in ("0000", "0001"):
        amap = DAttributionMap(values, EAttrMethod.SM, 0)
        save_attribution(amap, maps / f"{iid}-sm.bten")
    boxes = tmp_path / "boxes.csv"
    write_boxes({"0000": DBoundingBox(0, 0, 2, 2)}, boxes)

    out = tmp_path / "out"
    argv = ["evaluate", "--attributions", str(maps), "--boxes", str(boxes)]
    assert main(argv + ["--out", str(out)]) == 0

    lines = (out / "metrics.csv").read_text().splitlines()
    assert lines[0] == "id,method,loc,eg,pp,con"
    assert [line.split(",")[0] for line in lines[1:]] == ["0000", "mean"]
    assert (out / "metrics-table.csv").exists()


def test_main_render(tmp_path):
    src = tmp_path / "map.bten"
    save_tensor(np.arange(16.0).reshape(4, 4) - 8.0, src)
    out = tmp_path / "out"

    argv = ["render", "--attribution", str(src), "--out", str(out)]
    assert main(argv + ["--blur", "0", "--scale", "2"]) == 0
    assert (out / "map.ppm").read_bytes().startswith(b"P6")

    assert main(argv + ["--gray"]) == 0
    assert (out / "map.pgm").read_bytes().startswith(b"P5")


def test_main_train_toy(tmp_path):
    out = tmp_path / "out"
    argv = ["train-toy", "--dataset", "blobs2d", "--n", "20"]
    argv += ["--arch", "linear", "--epochs", "3", "--out", str(out)]
    assert main(argv) == 0

    net = load_model(out / "model.bnet")
    assert net.input_shape == (2,)
    assert net.num_classes == 2
    assert read_config(out / ECHO_NAME)["arch"] == "linear"


def test_main_experiment(tmp_path, files):
    out = tmp_path / "out"
    argv = ["experiment", "baseline-sensitivity", "--n", "2"]
    argv += ["--attacks", files["attacks"], "--heatmaps", "1"]
    assert main(argv + ["--out", str(out)]) == 0

    runs = list(out.glob("baseline-sensitivity-*"))
    assert len(runs) == 1
    run = runs[0]
    assert (run / "sensitivity.csv").exists()
    assert (run / "sensitivity-table.csv").exists()
    assert (run / "heatmaps" / "0000-sm.ppm").exists()
    echo = read_config(run / ECHO_NAME)
    assert echo["command"] == "baseline-sensitivity"
    assert echo["n"] == 2

    # same configuration, same run directory
    assert main(argv + ["--out", str(out)]) == 0
    assert list(out.glob("baseline-sensitivity-*")) == runs


def test_main_experiment_models(tmp_path, files, diag_net):
    # train-toy names every model model.bnet
    for tag in ("std", "robust"):
        (tmp_path / tag).mkdir()
        save_model(diag_net, tmp_path / tag / "model.bnet")
    models = f"{tmp_path / 'std' / 'model.bnet'},"
    models += str(tmp_path / "robust" / "model.bnet")

    out = tmp_path / "out"
    argv = ["experiment", "alignment", "--models", models, "--n", "4"]
    argv += ["--attacks", files["attacks"], "--out", str(out)]
    assert main(argv) == 0
    run = next(out.glob("alignment-*"))
    table = (run / "alignment-table.csv").read_text().splitlines()
    assert table[0] == "metric,std,robust"

    # the same model twice cannot be told apart
    twice = f"{files['model']},{files['model']}"
    argv = ["experiment", "alignment", "--models", twice, "--n", "4"]
    assert main(argv + ["--out", str(out)]) == 1


def test_main_experiment_flags():
    parser = build_parser()
    fixed = {"command", "experiment", "func", "config", "out", "threads"}
    fixed.add("verbose")
    for name in EXPERIMENTS:
        args = parser.parse_args(["experiment", name])
        keys = set(vars(args)) - fixed
        assert keys <= set(_experiment_defaults(name))

    args = parser.parse_args(["experiment", "alignment", "--attacks", "toy"])
    assert args.attacks == "toy"

    # smoothing runs no boundary search
    with pytest.raises(SystemExit) as exc:
        parser.parse_args(["experiment", "smoothing", "--attacks", "toy"])
    assert exc.value.code == 2

    with pytest.raises(SystemExit):
        parser.parse_args(["experiment", "alignment", "--heatmaps", "1"])


def test_main_experiment_smoothgrad(tmp_path, files):
    model = tmp_path / "detector.bnet"
    save_model(build_polarity_detector(), model)
    argv = ["experiment", "localization", "--models", str(model)]
    argv += ["--n", "2", "--methods", "sg", "--samples", "8"]
    argv += ["--attacks", files["attacks"], "--heatmaps", "0"]

    eg = {}
    for sigma in ("0.01", "1.0"):
        out = tmp_path / sigma
        assert main(argv + ["--sigma", sigma, "--out", str(out)]) == 0
        run = next(out.glob("localization-*"))
        echo = read_config(run / ECHO_NAME)
        assert echo["sigma"] == pytest.approx(float(sigma))
        table = (run / "localization-table.csv").read_text().splitlines()
        eg[sigma] = table[2].split(",")[1]
    assert eg["0.01"] != eg["1.0"]


def tree(root):
    return {
        p.relative_to(root): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def test_main_deterministic(tmp_path, files, monkeypatch):
    detector = str(tmp_path / "detector.bnet")
    save_model(build_polarity_detector(), detector)
    image = str(tmp_path / "image.bten")
    save_tensor(synth_dataset("patches8x8", 4, 0).inputs[1], image)
    boxes = str(tmp_path / "boxes.csv")
    write_boxes({"image": DBoundingBox(0, 0, 4, 4)}, boxes)
    search = ["--attacks", files["attacks"]]
    on_image = ["--model", detector, "--input", image]
    on_x = ["--model", files["model"], "--input", files["input"]]

    commands = [
        ["attribute", *on_image, "--method", "sg", "--samples", "4"]
        + ["--out", "a"],
        ["attribute", *on_image, "--method", "big", "--out", "a", *search],
        ["boundary", *on_x, "--out", "b", *search],
        ["evaluate", "--attributions", "a", "--boxes", boxes, "--out", "e"],
        ["render", "--attribution", "a/image-big.bten", "--out", "r"],
        ["train-toy", "--n", "20", "--epochs", "3", "--robust-eps", "0.5"]
        + ["--out", "t"],
        ["experiment", "alignment", "--models", files["model"], "--n", "4"]
        + ["--out", "x", *search],
        ["experiment", "localization", "--models", detector, "--n", "2"]
        + ["--methods", "sm,sg,big", "--samples", "4", "--heatmaps", "1"]
        + ["--out", "x", *search],
        ["experiment", "correlation", "--models", detector, "--n", "4"]
        + ["--heatmaps", "1", "--out", "x", *search],
        ["experiment", "smoothing", "--models", detector, "--n", "2"]
        + ["--dataset", "patches8x8", "--sigmas", "0,0.5", "--n-noise", "4"]
        + ["--iters", "5", "--out", "x"],
        ["experiment", "baseline-sensitivity", "--n", "2", "--heatmaps", "1"]
        + ["--out", "x", *search],
    ]

    # relative output paths keep the echoed configurations equal
    first, second = tmp_path / "first", tmp_path / "second"
    for out in (first, second):
        out.mkdir()
        monkeypatch.chdir(out)
        for argv in commands:
            assert main(argv) == 0, argv

    files_first = tree(first)
    assert {p.parts[0] for p in files_first} == {"a", "b", "e", "r", "t", "x"}
    assert len(list((first / "x").iterdir())) == len(EXPERIMENTS)
    assert files_first == tree(second)
