import base64
import io
import json
import sys

import numpy as np
import pytest
from numpy.testing import assert_array_equal
from PIL import Image

from clickbench.adapter import (
    AdapterError,
    AdapterSegmenter,
    decode_image_field,
    rle_decode,
    rle_encode,
)
from clickbench.clicksim import Click
from clickbench.harness import (
    BaselineSource,
    EvalConfig,
    EvalInstance,
    disk_segmenter,
    run_dataset,
    run_instance,
)

from oracles import random_blob_mask


REFERENCE_CMD = [sys.executable, "-m", "clickbench.adapter", "--radius", "12"]


def script_adapter(tmp_path, body):
    """Write a small python adapter script and return its command list."""
    path = tmp_path / "adapter.py"
    path.write_text("import sys, json\n" + body)
    return [sys.executable, str(path)]


def disk_instance(cx=20, cy=20, r=12, shape=(41, 41), id="d"):
    h, w = shape
    yy, xx = np.ogrid[:h, :w]
    return EvalInstance(id=id, gt=(xx - cx) ** 2 + (yy - cy) ** 2 <= r * r)


class TestRle:
    def test_hand_example(self):
        mask = np.array([[0, 1, 1], [1, 0, 0]], dtype=bool)
        assert rle_encode(mask) == [1, 3, 2]

    def test_leading_one_gets_zero_run(self):
        mask = np.ones((2, 2), dtype=bool)
        assert rle_encode(mask) == [0, 4]

    def test_all_zero(self):
        assert rle_encode(np.zeros((3, 5), dtype=bool)) == [15]

    def test_roundtrip_random_masks(self):
        rng = np.random.default_rng(31)
        for trial in range(50):
            h = int(rng.integers(1, 24))
            w = int(rng.integers(1, 24))
            mask = rng.random((h, w)) < rng.random()
            runs = rle_encode(mask)
            assert sum(runs) == h * w
            assert_array_equal(rle_decode(runs, (h, w)), mask)

    def test_roundtrip_blob(self):
        mask = random_blob_mask(np.random.default_rng(5), (33, 47))
        assert_array_equal(rle_decode(rle_encode(mask), mask.shape), mask)

    def test_decode_rejects_negative_run(self):
        with pytest.raises(AdapterError, match="non-negative"):
            rle_decode([3, -1, 2], (2, 2))

    def test_decode_rejects_wrong_total(self):
        with pytest.raises(AdapterError, match="sum"):
            rle_decode([2, 1], (2, 2))

    def test_decode_rejects_non_integers(self):
        with pytest.raises(AdapterError, match="integers"):
            rle_decode([2.0, 2.0], (2, 2))


class TestReferenceAdapter:
    def test_matches_in_process_disk_segmenter(self):
        inst = disk_instance()
        cases = [
            [Click(x=20, y=20)],
            [Click(x=5, y=35), Click(x=30, y=8)],
            [Click(x=20, y=20), Click(x=20, y=20, polarity="negative")],
            [Click(x=0, y=0), Click(x=40, y=40), Click(x=20, y=20, polarity="negative")],
        ]
        with AdapterSegmenter(REFERENCE_CMD) as seg:
            for clicks in cases:
                got = seg(inst, clicks, None)
                want = disk_segmenter(clicks, inst.gt.shape, 12)
                assert_array_equal(got, want)

    def test_prev_mask_accepted_on_wire(self):
        inst = disk_instance()
        prev = np.zeros(inst.gt.shape, dtype=bool)
        prev[10:15, 10:15] = True
        with AdapterSegmenter(REFERENCE_CMD) as seg:
            got = seg(inst, [Click(x=20, y=20)], prev)
        assert_array_equal(got, disk_segmenter([Click(x=20, y=20)], inst.gt.shape, 12))

    def test_full_loop_converges_on_matching_disk(self):
        inst = disk_instance()
        config = EvalConfig(strategy="baseline")
        with AdapterSegmenter(REFERENCE_CMD) as seg:
            t = run_instance(seg, inst, BaselineSource(), config,
                             lambda r: np.random.default_rng(r))
        assert t.noc == 1
        assert t.ious[0] == 1.0

    def test_close_terminates_process(self):
        seg = AdapterSegmenter(REFERENCE_CMD)
        seg.probe()
        conns = list(seg._all)
        assert len(conns) == 1
        seg.close()
        assert conns[0].proc.poll() is not None

    def test_string_command_is_split(self):
        seg = AdapterSegmenter(f"{sys.executable} -m clickbench.adapter --radius 3")
        with seg:
            got = seg(disk_instance(r=3), [Click(x=20, y=20)], None)
        assert_array_equal(got, disk_segmenter([Click(x=20, y=20)], (41, 41), 3))

    def test_threaded_run_spawns_per_thread_connections(self):
        instances = [disk_instance(id=f"d{i}") for i in range(4)]
        config = EvalConfig(strategy="baseline", master_seed=11)
        with AdapterSegmenter(REFERENCE_CMD) as seg:
            results = run_dataset(instances, seg, config, workers=2)
            assert 1 <= len(seg._all) <= 2
        assert all(r.error is None for r in results)
        assert all(r.baseline.noc == 1 for r in results)


class TestBrokenAdapters:
    def call_once(self, command, timeout=10.0):
        inst = disk_instance()
        with AdapterSegmenter(command, timeout=timeout) as seg:
            return seg(inst, [Click(x=20, y=20)], None)

    def test_error_response_raises(self, tmp_path):
        cmd = script_adapter(tmp_path, (
            "for line in sys.stdin:\n"
            "    req = json.loads(line)\n"
            "    print(json.dumps({'id': req['id'], 'error': 'boom'}), flush=True)\n"
        ))
        with pytest.raises(AdapterError, match="boom"):
            self.call_once(cmd)

    def test_invalid_json_raises(self, tmp_path):
        cmd = script_adapter(tmp_path, (
            "for line in sys.stdin:\n"
            "    print('this is not json', flush=True)\n"
        ))
        with pytest.raises(AdapterError, match="invalid JSON"):
            self.call_once(cmd)

    def test_non_object_response_raises(self, tmp_path):
        cmd = script_adapter(tmp_path, (
            "for line in sys.stdin:\n"
            "    print('[1,2,3]', flush=True)\n"
        ))
        with pytest.raises(AdapterError, match="JSON object"):
            self.call_once(cmd)

    def test_id_mismatch_raises(self, tmp_path):
        cmd = script_adapter(tmp_path, (
            "for line in sys.stdin:\n"
            "    print(json.dumps({'id': 'wrong', 'mask': [41*41]}), flush=True)\n"
        ))
        with pytest.raises(AdapterError, match="does not match"):
            self.call_once(cmd)

    def test_missing_mask_and_error_raises(self, tmp_path):
        cmd = script_adapter(tmp_path, (
            "for line in sys.stdin:\n"
            "    req = json.loads(line)\n"
            "    print(json.dumps({'id': req['id']}), flush=True)\n"
        ))
        with pytest.raises(AdapterError, match="neither mask nor error"):
            self.call_once(cmd)

    def test_bad_rle_raises(self, tmp_path):
        cmd = script_adapter(tmp_path, (
            "for line in sys.stdin:\n"
            "    req = json.loads(line)\n"
            "    print(json.dumps({'id': req['id'], 'mask': [7]}), flush=True)\n"
        ))
        with pytest.raises(AdapterError, match="sum"):
            self.call_once(cmd)

    def test_exiting_process_raises(self, tmp_path):
        cmd = script_adapter(tmp_path, "sys.exit(0)\n")
        with pytest.raises(AdapterError):
            self.call_once(cmd)

    def test_timeout_raises(self, tmp_path):
        cmd = script_adapter(tmp_path, (
            "import time\n"
            "sys.stdin.readline()\n"
            "time.sleep(30)\n"
        ))
        with pytest.raises(AdapterError, match="timed out"):
            self.call_once(cmd, timeout=0.5)

    def test_unresolvable_command_raises_at_probe(self):
        seg = AdapterSegmenter(["/nonexistent/segmenter-binary"])
        with pytest.raises(AdapterError, match="cannot start"):
            seg.probe()

    def test_harness_records_failure_instead_of_crashing(self, tmp_path):
        cmd = script_adapter(tmp_path, (
            "for line in sys.stdin:\n"
            "    req = json.loads(line)\n"
            "    print(json.dumps({'id': req['id'], 'error': 'no model'}), flush=True)\n"
        ))
        instances = [disk_instance(id="a"), disk_instance(id="b")]
        with AdapterSegmenter(cmd) as seg:
            results = run_dataset(instances, seg, EvalConfig(strategy="baseline"))
        assert all(r.error is not None for r in results)
        assert all("no model" in r.error for r in results)


class TestImageField:
    def test_instance_path_sent_verbatim(self):
        inst = EvalInstance(id="p", gt=np.ones((4, 4), bool), image_path="/data/img.png")
        assert AdapterSegmenter._image_field(inst) == "/data/img.png"

    def test_missing_image_becomes_black_png(self):
        inst = EvalInstance(id="p", gt=np.ones((6, 9), bool))
        field = AdapterSegmenter._image_field(inst)
        with decode_image_field(field) as img:
            assert img.size == (9, 6)
            assert img.getpixel((0, 0)) == (0, 0, 0)

    def test_decode_image_field_path(self, tmp_path):
        path = tmp_path / "img.png"
        Image.new("RGB", (5, 7), (9, 8, 7)).save(path)
        with decode_image_field(str(path)) as img:
            assert img.size == (5, 7)

    def test_decode_image_field_base64(self):
        buf = io.BytesIO()
        Image.new("RGB", (3, 2)).save(buf, format="PNG")
        encoded = base64.b64encode(buf.getvalue()).decode("ascii")
        with decode_image_field(encoded) as img:
            assert img.size == (3, 2)

    def test_base64_text_that_is_not_png_treated_as_path(self):
        # "abcd" is valid base64 but not a PNG, so it resolves as a path
        with pytest.raises(FileNotFoundError):
            decode_image_field("abcd")

    def test_request_payload_shape(self, tmp_path):
        # capture one raw request line and check the documented fields
        capture = tmp_path / "req.json"
        cmd = script_adapter(tmp_path, (
            f"line = sys.stdin.readline()\n"
            f"open({str(capture)!r}, 'w').write(line)\n"
            "req = json.loads(line)\n"
            "n = 41 * 41\n"
            "print(json.dumps({'id': req['id'], 'mask': [n]}), flush=True)\n"
        ))
        inst = disk_instance()
        prev = np.zeros(inst.gt.shape, bool)
        prev[0, 0] = True
        with AdapterSegmenter(cmd) as seg:
            seg(inst, [Click(x=3, y=4, polarity="negative")], prev)
        req = json.loads(capture.read_text())
        assert set(req) == {"id", "image", "clicks", "prev_mask"}
        assert req["clicks"] == [{"x": 3, "y": 4, "positive": False}]
        assert req["prev_mask"] == [0, 1, 41 * 41 - 1]
        assert req["id"] == "r1"
