import os
from pathlib import Path

import pytest

import wee

ROOT = Path(__file__).resolve().parents[2]
BOOKING = (ROOT / "fixtures" / "booking.wee").read_text()


def test_parse_lists_positions_in_source_order():
    summary = wee.parse(BOOKING)
    assert summary["handler"] == "mock"
    assert summary["positions"] == ["book_airline", "book_hotel", "sum", "inform"]
    assert "total" in summary["context"]


def test_parse_error_carries_location():
    with pytest.raises(wee.ParseError, match="wait count must be"):
        wee.parse('workflow { handler "mock" parallel wait: 0 { } }')
    assert issubclass(wee.ParseError, wee.Error)


def test_check_reports_undeclared_variable():
    assert wee.check(BOOKING) == []
    (diag,) = wee.check('workflow { handler "mock" choose { alternative (y > 1) { } } }')
    assert "y" in diag


def test_format_source_is_a_fixed_point():
    once = wee.format_source(BOOKING)
    assert wee.format_source(once) == once


def test_evaluate():
    assert wee.evaluate("price > 10000", {"price": 12000}) is True
    assert wee.evaluate("-7 / 2") == -3
    with pytest.raises(wee.Error):
        wee.evaluate("1 / 0")


@pytest.mark.parametrize("airline,hotel,informed", [(4000, 7000, True), (4000, 6000, False)])
def test_booking_informs_only_above_limit(airline, hotel, informed):
    script = {
        "book_airline": [{"result": {"airline_cost": airline}}],
        "book_hotel": [{"result": {"hotel_cost": hotel}}],
        "inform": [{}],
    }
    result = wee.run(BOOKING, script=script)
    assert result["lifecycle"] == "finished"
    assert result["exit_code"] == 0
    assert result["context"]["total"] == airline + hotel
    started = [e["position"] for e in result["events"] if e["kind"] == "activity_start"]
    assert ("inform" in started) == informed
    assert [e["seq"] for e in result["events"]] == list(range(1, len(result["events"]) + 1))


def test_run_reports_engine_errors():
    loop = 'workflow { handler "mock" context i: 0 cycle (true) { manipulate :inc { i = i + 1 } } }'
    result = wee.run(loop, max_iterations=5)
    assert result["exit_code"] == 1
    assert "iteration" in result["error"]


def test_resolve_trigger():
    events = [(0, "go"), (100, "tick"), (300, "go")]
    assert wee.resolve_trigger("persistent", events, "go", 100) == 100
    assert wee.resolve_trigger("transient", events, "go", 100) == 300
    assert wee.resolve_trigger("transient", events, "go", 400) is None


def test_source_hash():
    assert wee.source_hash("") == "cbf29ce484222325"


def test_pattern_corpus_matches_table():
    report = wee.run_patterns(os.fspath(ROOT / "patterns"), parallel=True)
    assert report["all_passed"]
    assert report["table_matches"]
    recount = report["aggregate"]["recount"]
    assert (recount["+"], recount["+/-"], recount["-"]) == (24, 8, 11)


@pytest.mark.skipif("WEE_EXPECT_MODULE_DIR" not in os.environ, reason="only under ctest")
def test_imports_the_module_under_test():
    assert Path(wee._wee.__file__).parent == Path(os.environ["WEE_EXPECT_MODULE_DIR"])
