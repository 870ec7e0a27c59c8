import struct
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from decomcam_exporter.adapters import LayerNotFoundError, ResNetAdapter, load_image, make_adapter
from decomcam_exporter.cli import main as exporter_main
from decomcam_exporter.dcam_writer import write_dump
from decomcam_exporter.server import ScoreServer


@pytest.fixture(scope="module")
def sample_image(tmp_path_factory) -> Path:
    # synthetic photo: smooth gradient plus a few blocks
    rng = np.random.default_rng(0)
    h = w = 300
    yy, xx = np.mgrid[0:h, 0:w]
    img = np.stack(
        [
            0.3 + 0.5 * xx / w,
            0.2 + 0.5 * yy / h,
            0.5 + 0.1 * rng.standard_normal((h, w)),
        ],
        axis=-1,
    )
    img[60:140, 80:200, 0] = 0.9
    img[180:260, 40:120, 2] = 0.9
    arr = np.clip(img * 255, 0, 255).astype(np.uint8)
    path = tmp_path_factory.mktemp("images") / "sample.png"
    Image.fromarray(arr, mode="RGB").save(path)
    return path


@pytest.fixture(scope="module")
def adapter() -> ResNetAdapter:
    return ResNetAdapter(layer="layer4", pretrained=False)


class TestPreprocessing:
    def test_load_image_shape_and_range(self, sample_image):
        img = load_image(str(sample_image))
        assert img.shape == (3, 224, 224)
        assert img.dtype == np.float32
        assert 0.0 <= img.min() and img.max() <= 1.0


class TestResNetAdapter:
    def test_activation_and_gradient_shapes(self, adapter, sample_image):
        img = load_image(str(sample_image))
        result = adapter.probe(img, "class:285")
        assert result.activations.shape == (2048, 7, 7)
        assert result.gradients.shape == result.activations.shape

    def test_probe_score_matches_plain_score(self, adapter, sample_image):
        img = load_image(str(sample_image))
        result = adapter.probe(img, "class:7")
        assert result.score == pytest.approx(adapter.score(img, "class:7"), abs=1e-5)

    def test_missing_layer(self):
        with pytest.raises(LayerNotFoundError):
            ResNetAdapter(layer="layer99", pretrained=False)

    def test_bad_prompt(self, adapter, sample_image):
        img = load_image(str(sample_image))
        with pytest.raises(ValueError):
            adapter.score(img, "a dog")

    def test_unknown_model(self):
        with pytest.raises(ValueError):
            make_adapter("vgg", "features")


class TestExportCli:
    def test_export_writes_dump(self, sample_image, tmp_path):
        out = tmp_path / "one.dcam"
        code = exporter_main(
            ["--model", "resnet50", "--layer", "layer4", "--image", str(sample_image),
             "--prompt", "class:285", "--out", str(out)]
        )
        assert code == 0
        data = out.read_bytes()
        assert data[:8] == b"DCAMTNSR"

    def test_export_deterministic(self, sample_image, tmp_path):
        outs = []
        for name in ("a.dcam", "b.dcam"):
            out = tmp_path / name
            code = exporter_main(
                ["--model", "resnet50", "--layer", "layer4", "--image", str(sample_image),
                 "--prompt", "class:285", "--out", str(out)]
            )
            assert code == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_missing_image_exits_2(self, tmp_path):
        code = exporter_main(
            ["--image", str(tmp_path / "none.png"), "--prompt", "class:1",
             "--out", str(tmp_path / "x.dcam")]
        )
        assert code == 2

    def test_missing_args_exit_64(self):
        assert exporter_main(["--image", "x.png"]) == 64

    def test_bad_layer_exits_2(self, sample_image, tmp_path):
        code = exporter_main(
            ["--layer", "nope", "--image", str(sample_image), "--prompt", "class:1",
             "--out", str(tmp_path / "x.dcam")]
        )
        assert code == 2


class TestWriterFormat:
    def test_header_layout(self, tmp_path):
        path = tmp_path / "t.dcam"
        write_dump(
            path,
            image=np.zeros((3, 2, 2), dtype=np.float32),
            activations=np.zeros((1, 2, 2), dtype=np.float32),
            gradients=np.zeros((1, 2, 2), dtype=np.float32),
            score=0.25,
            concept="c",
            layer="l",
            model="m",
        )
        data = path.read_bytes()
        assert data[:8] == b"DCAMTNSR"
        version, count = struct.unpack("<II", data[8:16])
        assert version == 1 and count == 7
        (name_len,) = struct.unpack("<H", data[16:18])
        assert data[18 : 18 + name_len] == b"image"

    def test_shape_validation(self, tmp_path):
        with pytest.raises(ValueError):
            write_dump(
                tmp_path / "bad.dcam",
                image=np.zeros((1, 2, 2), dtype=np.float32),
                activations=np.zeros((1, 2, 2), dtype=np.float32),
                gradients=np.zeros((1, 2, 2), dtype=np.float32),
                score=0.0,
                concept="c",
                layer="l",
                model="m",
            )


class TestScoreServer:
    def _request(self, img: np.ndarray, prompt: str) -> bytes:
        body = struct.pack("<III", *img.shape)
        body += np.ascontiguousarray(img, dtype="<f4").tobytes()
        encoded = prompt.encode()
        body += struct.pack("<I", len(encoded)) + encoded
        return struct.pack("<I", len(body)) + body

    def _roundtrip(self, server: ScoreServer, frame: bytes) -> tuple[int, bytes]:
        import socket

        with socket.create_connection((server.host, server.port), timeout=30) as sock:
            sock.sendall(frame)
            head = sock.recv(4)
            (body_len,) = struct.unpack("<I", head)
            body = b""
            while len(body) < body_len:
                body += sock.recv(body_len - len(body))
        return body[0], body[1:]

    def test_score_agrees_with_adapter(self, adapter, sample_image):
        server = ScoreServer(adapter)
        server.start_background()
        try:
            img = load_image(str(sample_image))
            status, payload = self._roundtrip(server, self._request(img, "class:285"))
            assert status == 0
            wire_score = struct.unpack("<f", payload)[0]
            assert wire_score == pytest.approx(adapter.score(img, "class:285"), abs=1e-5)
        finally:
            server.close()

    def test_empty_prompt_error_frame(self, adapter):
        server = ScoreServer(adapter)
        server.start_background()
        try:
            img = np.zeros((3, 224, 224), dtype=np.float32)
            status, payload = self._roundtrip(server, self._request(img, ""))
            assert status == 2
            assert b"prompt" in payload
        finally:
            server.close()

    def test_malformed_frame_error(self, adapter):
        server = ScoreServer(adapter)
        server.start_background()
        try:
            status, payload = self._roundtrip(server, struct.pack("<I", 3) + b"abc")
            assert status == 1
        finally:
            server.close()

    def test_duplicate_requests_identical(self, adapter, sample_image):
        server = ScoreServer(adapter)
        server.start_background()
        try:
            img = load_image(str(sample_image))
            frame = self._request(img, "class:5")
            first = self._roundtrip(server, frame)
            second = self._roundtrip(server, frame)
            assert first == second
        finally:
            server.close()
