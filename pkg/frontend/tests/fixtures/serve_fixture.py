"""Start a real labeling service with a few queued tasks, for the
client interop tests. Prints "URL <endpoint>" once listening, then
serves until killed."""

import io
import time

from PIL import Image

from captchakit.adapters import TaskQueue, make_label_validator
from captchakit.labeling import LabelingService, rules_for_scheme
from captchakit.schemes import weibo


def main() -> None:
    buf = io.BytesIO()
    Image.new("RGB", (60, 24), (250, 250, 250)).save(buf, format="PNG")
    png = buf.getvalue()

    cfg = weibo()
    queue = TaskQueue(make_label_validator(cfg))
    queue.queue_for_labeling(
        [(f"s{i:04d}", f"/images/s{i:04d}.png") for i in range(3)], 0
    )
    service = LabelingService(
        queue,
        rules_for_scheme(cfg),
        lambda sid: png if sid.startswith("s") else None,
        progress_source=lambda: {"history": [0.25, 0.5]},
        host="127.0.0.1",
        port=0,
    )
    service.start()
    print(f"URL {service.url}", flush=True)
    while True:
        time.sleep(1)


if __name__ == "__main__":
    main()
