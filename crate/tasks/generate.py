"""Regenerates the bundled task folders from scikit-learn's toy datasets.

Each folder gets task.json, train.csv and test.csv (75/25 split, stratified
for classification). A few cells are blanked or set to NaN, and one column is
categorical, so the imputer and encoder primitives have work to do.
"""

import json
import pathlib

import numpy as np
import pandas as pd
from sklearn import datasets
from sklearn.model_selection import train_test_split

ROOT = pathlib.Path(__file__).resolve().parent


def write(name, frame, target, problem_type, metric, seed):
    rng = np.random.default_rng(seed)
    features = [c for c in frame.columns if c != target]
    # Blank ~2% of the cells in three numeric columns.
    for col in features[:3]:
        if frame[col].dtype.kind != "f":
            continue
        mask = rng.random(len(frame)) < 0.02
        frame.loc[mask, col] = np.nan
    stratify = frame[target] if problem_type == "classification" else None
    train, test = train_test_split(frame, test_size=0.25, random_state=seed, stratify=stratify)
    out = ROOT / name
    out.mkdir(exist_ok=True)
    # Alternate the two missing-cell spellings.
    for split, part in (("train", train), ("test", test)):
        part = part.astype(object).where(part.notna(), None)
        for i, col in enumerate(features[:3]):
            token = "" if i % 2 == 0 else "NaN"
            part[col] = part[col].map(lambda v, t=token: t if v is None else v)
        part.to_csv(out / f"{split}.csv", index=False)
    task = {
        "id": name,
        "data_modality": "single_table",
        "problem_type": problem_type,
        "metric": metric,
        "target": target,
    }
    (out / "task.json").write_text(json.dumps(task, indent=2) + "\n")


def band(values, labels=("low", "mid", "high")):
    return pd.qcut(values, len(labels), labels=list(labels)).astype(str)


def breast_cancer():
    d = datasets.load_breast_cancer(as_frame=True)
    frame = d.frame.rename(columns=lambda c: c.replace(" ", "_"))
    frame["target"] = frame["target"].map({0: "malignant", 1: "benign"})
    frame["size_band"] = band(frame["mean_radius"])
    write("breast_cancer", frame, "target", "classification", "accuracy", 0)


def wine():
    d = datasets.load_wine(as_frame=True)
    frame = d.frame.rename(columns=lambda c: c.replace("/", "_"))
    frame["target"] = frame["target"].map(lambda k: f"cultivar_{k}")
    frame["alcohol_band"] = band(frame["alcohol"])
    write("wine", frame, "target", "classification", "f1_macro", 1)


def diabetes():
    d = datasets.load_diabetes(as_frame=True, scaled=False)
    frame = d.frame
    frame["sex"] = frame["sex"].map({1.0: "F", 2.0: "M"})
    write("diabetes", frame, "target", "regression", "r2", 2)


def iris(path):
    d = datasets.load_iris(as_frame=True)
    frame = d.frame.rename(columns=lambda c: c.replace(" (cm)", "").replace(" ", "_"))
    frame["species"] = frame["target"].map(dict(enumerate(d.target_names)))
    frame = frame.drop(columns="target")
    train, test = train_test_split(frame, test_size=0.2, random_state=0, stratify=frame["species"])
    path.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path / "full.csv", index=False)
    train.to_csv(path / "train.csv", index=False)
    test.to_csv(path / "test.csv", index=False)
    task = {"id": "iris", "problem_type": "classification", "metric": "accuracy", "target": "species"}
    (path / "task.json").write_text(json.dumps(task, indent=2) + "\n")


if __name__ == "__main__":
    breast_cancer()
    wine()
    diabetes()
    iris(ROOT.parent / "crates" / "core" / "tests" / "fixtures" / "iris")
