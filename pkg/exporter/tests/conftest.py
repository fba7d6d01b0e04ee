import numpy as np
import pytest
from PIL import Image, ImageDraw

WORDS = """
apple arrow autumn basket beach bell bicycle bird blanket bottle branch bread
bridge brick brush bucket butter cabin candle canyon carpet castle chair cheese
cherry circle cliff cloud coast copper coral corn cotton cradle creek crystal
curtain daisy desert diamond door dragon dream dust eagle earth ember engine
fabric falcon feather fence field flame flower forest fountain fox garden gate
glacier glass grape grass gravel harbor harvest hill honey horizon house island
ivory jacket jungle kettle kitten ladder lake lantern leaf lemon light lily
lion marble meadow mirror mist moon mountain needle nest oak ocean orange
orchard owl palace paper peach pearl pebble pine planet pond prairie rain
raven reef ribbon river road rock rose sail sand shadow shell ship silver sky
snow spark spring star stone storm stream summer sun thunder tiger timber
tower trail tree valley velvet village violet water wave wheat willow window
winter wolf wood
""".split()


@pytest.fixture(scope="session")
def word_list_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("words") / "words.txt"
    path.write_text("".join(w + "\n" for w in WORDS), encoding="utf-8")
    return path


def _paint(name: str, size: int = 96) -> Image.Image:
    rng = np.random.default_rng(abs(hash(name)) % 2**32)
    img = Image.new("RGB", (size, size))
    draw = ImageDraw.Draw(img)
    if name == "gradient":
        base = np.linspace(0, 255, size, dtype=np.uint8)
        arr = np.stack([np.tile(base, (size, 1))] * 3, axis=-1)
        arr[:, :, 1] = arr[:, :, 1].T
        return Image.fromarray(arr)
    if name == "checker":
        arr = (np.indices((size, size)).sum(axis=0) // 12 % 2) * 200 + 30
        return Image.fromarray(np.stack([arr, 255 - arr, arr // 2], axis=-1).astype(np.uint8))
    if name == "noise":
        return Image.fromarray(rng.integers(0, 256, (size, size, 3), dtype=np.uint8))
    if name == "circles":
        for r in range(size // 2, 4, -10):
            color = tuple(int(c) for c in rng.integers(0, 256, 3))
            draw.ellipse([size // 2 - r, size // 2 - r, size // 2 + r, size // 2 + r], fill=color)
        return img
    if name == "stripes":
        for y in range(0, size, 8):
            color = tuple(int(c) for c in rng.integers(0, 256, 3))
            draw.rectangle([0, y, size, y + 8], fill=color)
        return img
    draw.polygon(
        [(10, size - 10), (size // 2, 10), (size - 10, size - 10)],
        fill=(220, 180, 40),
    )
    return img


@pytest.fixture(scope="session")
def image_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("images")
    paths = []
    for name in ("gradient", "checker", "noise", "circles", "stripes", "triangle"):
        path = root / f"{name}.png"
        _paint(name).save(path)
        paths.append(path)
    return paths
