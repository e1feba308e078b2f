"""
Human-labeling service round trip
=================================

Starts the labeling HTTP service on a local port, queues a handful of
rendered samples, and plays the part of the human with plain urllib
calls: fetch a batch, submit one deliberately bad label to show the
inline rejection, then finish the round and print the progress counts.
"""

import json
import urllib.request

from captchakit.adapters import TaskQueue, make_label_validator
from captchakit.labeling import LabelingService, rules_for_scheme
from captchakit.render import derive_seed, render_captcha
from captchakit.schemes import preset

SCHEME = preset(1)
ROUND = 1

samples = [render_captcha(SCHEME, derive_seed(31415, i)) for i in range(5)]
images = {f"s{i}": s.to_png_bytes() for i, s in enumerate(samples)}
truth = {f"s{i}": s.label for i, s in enumerate(samples)}

queue = TaskQueue(make_label_validator(SCHEME))
queue.queue_for_labeling([(sid, f"/images/{sid}.png") for sid in images], ROUND)

service = LabelingService(queue, rules_for_scheme(SCHEME), images.get)
service.start()
print(f"service listening at {service.url}")


def call(path, payload=None):
    req = urllib.request.Request(service.url + path)
    if payload is not None:
        req.data = json.dumps(payload).encode()
        req.add_header("Content-Type", "application/json")
    with urllib.request.urlopen(req) as resp:
        return json.loads(resp.read())


batch = call("/api/batch?limit=10&submitter=demo")["tasks"]
print(f"fetched {len(batch)} tasks")

# a wrong-length label bounces with a reason and the task goes back in the queue
bad = call("/api/label", {"task_id": batch[0]["task_id"], "label": "NO", "submitter": "demo"})
print(f"rejected: {bad['task']['rejection_reason']}")

# label the rest of the batch properly, then pick the bounced task up again
for task in batch[1:]:
    call("/api/label", {"task_id": task["task_id"],
                        "label": truth[task["sample_id"]], "submitter": "demo"})
for task in call("/api/batch?limit=10&submitter=demo")["tasks"]:
    call("/api/label", {"task_id": task["task_id"],
                        "label": truth[task["sample_id"]], "submitter": "demo"})

progress = call(f"/api/progress?round={ROUND}")
print(f"progress: {progress['labeled']}/{progress['total']} labeled")
service.stop()
