from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from cooc.core.correlation import LabelSpace
from cooc.core.synthgen import generate
from cooc.errors import ConfigError, ParseError
from cooc.profiles import get_profile
from cooc.util.dataset_io import (
    dataset_csv_text,
    parse_dataset,
    predictions_csv_text,
    read_dataset,
    read_predictions,
    write_dataset,
)
from cooc.util.naming import parse_pairs, parse_rho_list, rho_label

HEADER = "subject,task,domain,f0,f1,AU01,AU02\n"


def test_written_dataset_reads_back_byte_identical(tmp_path: Path) -> None:
    table = generate(get_profile("tiny").spec(seed=2))
    path = tmp_path / "dataset.csv"
    write_dataset(table, path)

    loaded = read_dataset(path)
    assert loaded.class_names == table.class_names
    assert loaded.task_names == table.task_names
    assert np.array_equal(loaded.labels, table.labels)
    assert np.allclose(loaded.features, table.features, rtol=1e-8)
    assert dataset_csv_text(loaded) == path.read_text(encoding="utf-8")


def test_bad_label_reports_line() -> None:
    text = HEADER + "s0,t,source,0.1,0.2,1,0\ns0,t,source,0.3,0.4,2,0\n"
    with pytest.raises(ParseError) as err:
        parse_dataset(text)
    assert err.value.line == 3
    assert "AU01" in str(err.value)


def test_short_row_and_bad_feature() -> None:
    with pytest.raises(ParseError) as err:
        parse_dataset(HEADER + "s0,t,source,0.1,1,0\n")
    assert err.value.line == 2
    with pytest.raises(ParseError):
        parse_dataset(HEADER + "s0,t,source,x,0.2,1,0\n")


def test_schema_mismatch() -> None:
    with pytest.raises(ParseError) as err:
        parse_dataset(HEADER + "s0,t,source,0.1,0.2,1,0\n", expected_classes=("AU01", "AU04"))
    assert "AU04" in str(err.value)


def test_header_errors() -> None:
    with pytest.raises(ParseError):
        parse_dataset("")
    with pytest.raises(ParseError):
        parse_dataset("subject,task,f0,AU01,AU02\n")
    with pytest.raises(ParseError):
        parse_dataset("subject,task,domain,f0,AU01\n")


def test_task_order_is_kept() -> None:
    text = HEADER + "s0,b,source,0,0,1,0\ns0,a,source,0,0,0,1\n"
    assert parse_dataset(text).task_names == ("b", "a")
    assert parse_dataset(text, task_names=("a", "b")).task_names == ("a", "b")


def test_predictions_round_trip(tmp_path: Path) -> None:
    yhat = np.array([[0.25, 0.75], [0.5, 0.125]])
    path = tmp_path / "predictions.csv"
    path.write_text(predictions_csv_text(yhat, ("a", "b")), encoding="utf-8")
    values, names = read_predictions(path)
    assert names == ("a", "b")
    assert np.array_equal(values, yhat)

    path.write_text("a,b\n0.5,1.0\n", encoding="utf-8")
    with pytest.raises(ParseError):
        read_predictions(path)


def test_pair_parsing() -> None:
    space = LabelSpace(("AU01", "AU02", "AU12"))
    assert parse_pairs(["au01:AU12", " AU02 : AU01 "], space) == [("AU01", "AU12"), ("AU02", "AU01")]
    with pytest.raises(ConfigError):
        parse_pairs(["AU01:AU01"], space)
    with pytest.raises(ConfigError):
        parse_pairs(["AU01-AU02"], space)


def test_rho_list() -> None:
    assert parse_rho_list("0, 0.45,1") == (0.0, 0.45, 1.0)
    assert rho_label(0.45) == "rho-0.45"
    with pytest.raises(ConfigError):
        parse_rho_list("0.2,1.5")
    with pytest.raises(ConfigError):
        parse_rho_list(" , ")
