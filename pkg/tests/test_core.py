import pytest

from edgesim.core import (LambdaClass, LambdaRequest, LambdaResponse, ReturnCode,
                          TransactionRecord, derive_comm_latency)

FACE = LambdaClass("face")


def record(delay, ptime, code=ReturnCode.OK):
    req = LambdaRequest(FACE, 1000, "c1", 0.0)
    return TransactionRecord(req, LambdaResponse(code, 10, "k1", ptime, 0.0), delay)


def test_latency_is_delay_minus_processing():
    assert derive_comm_latency(record(0.015, 0.010)) == pytest.approx(0.005, abs=1e-15)


def test_latency_zero_when_all_processing():
    assert derive_comm_latency(record(0.010, 0.010)) == 0.0


@pytest.mark.parametrize("code", [ReturnCode.NO_DESTINATION, ReturnCode.DROPPED])
def test_latency_needs_ok(code):
    with pytest.raises(ValueError):
        derive_comm_latency(record(0.01, 0.0, code))


def test_request_size_positive():
    with pytest.raises(ValueError):
        LambdaRequest(FACE, 0, "c1", 0.0)


def test_response_checks():
    with pytest.raises(ValueError):
        LambdaResponse(ReturnCode.OK, processing_time=-1.0)
    with pytest.raises(ValueError):
        LambdaResponse(ReturnCode.OK, reported_load=1.5)


def test_output_size_ratio():
    assert LambdaClass("x", 0.05).output_size(20_000) == 1000
    # never a zero-byte message
    assert LambdaClass("x", 0.0).output_size(20_000) == 1
    assert FACE.output_size(12_500) == 12_500


def test_class_identity_by_name():
    assert LambdaClass("a", 0.5) == LambdaClass("a", 1.0)
    with pytest.raises(ValueError):
        LambdaClass("a", -1.0)


def test_record_dispatch_latency_property():
    assert record(0.02, 0.005).dispatch_latency == pytest.approx(0.015)
