import pytest
import torch
from torch import nn
from torchvision.io import write_png


@pytest.fixture
def make_pngs(tmp_path):
    """Write n seeded random RGB PNGs and return their paths."""

    def _make(n, size=(48, 64), seed=0):
        gen = torch.Generator().manual_seed(seed)
        paths = []
        for i in range(n):
            img = torch.randint(0, 256, (3, *size), dtype=torch.uint8, generator=gen)
            path = tmp_path / f"img_{i:02d}.png"
            write_png(img, str(path))
            paths.append(str(path))
        return paths

    return _make


class TinyNet(nn.Module):
    """Two hookable convs plus one module the forward pass never touches."""

    def __init__(self):
        super().__init__()
        torch.manual_seed(11)
        self.stem = nn.Conv2d(3, 4, 3, stride=2, padding=1)
        self.mid = nn.Conv2d(4, 6, 3, stride=2, padding=1)
        self.unused = nn.Conv2d(3, 2, 1)

    def forward(self, x):
        return self.mid(torch.relu(self.stem(x)))


@pytest.fixture
def tiny_net():
    return TinyNet().eval()
