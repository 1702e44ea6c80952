"""Run the command line tools from Python: two experiments, one Koopman matrix."""
import json
import os
import tempfile

from kooprep import cli

work = tempfile.mkdtemp()
os.environ[cli.OUTPUT_DIR_ENV] = work

doc = {
    "seed": 1,
    "steps": [
        {"name": "run1", "command": "simulate", "system": "linear:A=0.9 0.1;0 0.8,discrete=true",
         "x0": "1,0", "steps": 30, "out": "run1.csv"},
        {"name": "run2", "command": "simulate", "system": "linear:A=0.9 0.1;0 0.8,discrete=true",
         "x0": "0,1", "steps": 30, "out": "run2.csv"},
        {"name": "fit", "command": "koopman", "method": "edmd", "dict": "linear:n=2,const=false",
         "data": ["@run1", "@run2"], "out": "k.json"},
        {"name": "one", "command": "observability", "matrix": "@fit", "x0": ["1,0"], "out": "one.json"},
        {"name": "two", "command": "observability", "matrix": "@fit", "x0": ["1,0", "0,1"], "out": "two.json"},
    ],
}
manifest = cli.run_pipeline(doc)
for step in manifest["steps"]:
    print(step["name"], step["exit_code"], " ".join(step["argv"]))
for name in ("one.json", "two.json"):
    with open(os.path.join(work, name)) as fh:
        print(name, "unobservable dimension:", json.load(fh)["unobservable_dimension"])
