"""Prompt template catalog.

Templates are shipped verbatim from the upstream prompt set, with the
following normalizations (each applied so that ``str.format`` substitution
is byte-deterministic and the rendered text is what a model should see):

* placeholder names containing spaces are snake_cased
  (``{statement thoughts_of_basic_problem_type}`` ->
  ``{statement_thoughts_of_basic_problem_type}``, ``{modeling thought}`` ->
  ``{modeling_thought}``);
* literal braces inside expected-output JSON skeletons are doubled for
  format-string escaping and render as single braces;
* backslash-escaped braces in the source of the add-new-nodes template are
  plain placeholders here;
* the code-correction template gains explicit ``{code}`` and ``{error}``
  input slots; the source shows only the instruction header with no slot
  for the failing program;
* mismatched quote characters inside the embedded fixed solver-code block
  (the ``print("Timecost" ...)`` lines) are repaired to valid statements;
* "return subtype not found" instruction kept as written even though model
  responses use the sentinel "subtype not find"; the response parser
  accepts both spellings;
* the add-new-nodes template's "if there is any problem type that is a
  subtype ... return an empty list" is corrected to "no problem type",
  the evident intent.

``model_plain`` is the with-thoughts modeling template with the thought
slot replaced by fixed text, used when the search halts at the root and no
reference thoughts are provided.
"""

from __future__ import annotations

import string

# The fixed solver-code template. Also the global default code template for
# distilled schemas that do not carry their own.
DEFAULT_CODE_TEMPLATE = '''import json
import numpy as np
import math
import gurobipy as gp
from gurobipy import GRB

# Create a new model
model = gp.Model('model')

# define parameters

# define variables

# define constraints

# define objective

# Optimize the model
model.optimize()
status = model.status

obj_val = None
# Check whether the model is infeasible, has infinite solutions, or has an optimal solution
if status == gp.GRB.INFEASIBLE:
    obj_val = "infeasible"
elif status == gp.GRB.UNBOUNDED:
    obj_val = "unbounded"
elif status == gp.GRB.OPTIMAL:
    obj_val = model.objVal
time = model.TimeLimit
print("Timecost:", time)
print("Objective Value:", obj_val)
'''

# Category names too broad for a tree node; distilled types matching one of
# these are accepted but flagged with a warning.
BROAD_CATEGORY_NAMES = frozenset(
    {
        "linear programming",
        "mixed-integer optimization",
        "mixed integer optimization",
        "integer optimization",
        "integer linear programming",
        "integer linear programming problem",
        "mixed-integer linear programming",
        "mixed integer linear programming",
        "combinatorial optimization",
        "mathematical programming",
    }
)


SUBPROBLEM_IDENTIFY = """You are a mathematical formulator working with a team of optimization experts. The objective is to tackle a complex optimization problem.


You are given a specific problem and its current basic problem type. You are also provided with a list of subtypes for this basic problem type.
Input problem: {input_problem}.
Its current basic problem type:{basic_type}

You are given a list of defined subtypes and the statement thoughts of subtypes: {statement_thought_info}.

Your task is to determine if the specific problem belongs to one of the given subtypes. If it does, return the subtype directly. Importantly, you must return the only subtype verbatim(don't return the statement thoughts), which is provided in the list. If it does not, return subtype not found.

Also, return a boolean value indicating whether the input problem belongs to the defined subtypes. Return only the final answer in the following JSON format:

```json
{{
    matching_subtype: <matching_subtype>,
    reasoning: <reasoning_process>
    belongs_to_subtypes: <boolean_value>
}}
```

- Note that I'm going to use Python JSON.loads() function to parse the JSON file, so please make sure the format is correct (don't add ',' before enclosing '}}' or ']' characters.
- Generate the complete JSON file and don't omit anything.
- Use '```json' and '```' to enclose the json file.
"""


MODEL_WITH_THOUGHTS = """You are a mathematical formulator working with a team of optimization experts. The objective is to tackle a complex optimization problem.

You are an expert in problem analysis and can apply previous problem-solving approaches to new issues. The user will provide a specific task statement thoughts and a modeling thought. Your goal is to analyze the user's task and generate a specific solution based on the modeling thought. If the instantiated solution involves Python code, only provide the code and let the compiler handle it. If the solution does not involve code, provide a final answer that is easy to extract from the text.
It should be noted that all the Python code should be within one code block; the answer should not include more than one code block! And strictly follow the modeling thought to instantiate the Gurobi code, but you should also adjust the input parameter according to the user input!

User Input:
{user_input}
modeling thought:
{modeling_thought}

Please analyze the above user task statement thoughts and modeling thought, and generate a specific, detailed solution. If the solution involves Python code, only provide the code. If not, provide a clear and extractable final answer.
"""


CODE_CORRECTION = """You are an excellent Python programming master who is proficient in analyzing and editing Python code, and you are also good at understanding real-world problems. Your task is:
1. Analyze the given Python code
2. Edit the input code to make sure the edited code is correct and can run and solve the problem correctly.
Your response should follow the format below:
```python
## Edited code here
```

Input code:
```python
{code}
```

Observed error:
{error}
"""


DISTILL_ROOT = """You are given a specific combinatorial optimization problem.

Your task is to summarize the industrial scene type of this specific problem and provide a detailed statement thoughts of this type.

Importantly, you must classify the problem into more precise industrial scenarios, such as the Traveling Salesman Problem (TSP), facility location problem, Parallel Machine Scheduling, and so on. Avoid using broad categories such as linear programming, mixed-integer optimization, integer optimization, Integer Linear Programming Problem, and so on.

- **Specific Problem**: {specific_problem}

Please provide the following information in JSON format:

```json
{{
    "industrial_scene_type": "<industrial_scene_type>",
    "statement_thoughts_of_type":{{
    "statement_thoughts": "<the more precise of statement thoughts>",
    "constraints":
    {{
      "<get the Constraint 1>": "Detailed description of constraint 1",
      "<get the Constraint 2>": "Detailed description of constraint 2"
    }}
    }}
}}
```
Here is an output example:
{{
    "industrial_scene_type": "Maximum Flow Problem",
    "statement_thoughts_of_type": {{
    "statement_thoughts": "The Maximum Flow Problem involves determining the highest possible flow that can be routed through a directed graph from a specified source node to a sink node, while adhering to the capacity limits of the edges. This problem is foundational in network flow theory and has applications in transportation networks, communication systems, supply chain logistics, and resource distribution. The solution must respect edge capacities, flow directionality, and conservation laws at intermediate nodes.",
    "constraints": {{
        "Directed Graph": "Flow can only travel in the direction specified by the edges in the graph.",
        "Capacity Constraints": "The flow on each edge must be non-negative and cannot exceed the edge's maximum capacity.",
        "Flow Conservation": "For every node except the source and sink, the total incoming flow must equal the total outgoing flow."
    }}
    }}
}}
"""


DISTILL_SUBTYPE = """You are a mathematical formulator working with a team of optimization experts. The objective is to tackle a complex optimization problem.

You are given a specific problem, its current basic problem type, and the statement thoughts of the basic problem type.

Your task is to determine the more specific subtype of the given basic problem type that the specific problem belongs to, and provide a more detailed statement thoughts of this subtype.

- **Specific Problem**: {specific_problem}
- **Current Basic Problem Type**: {current_basic_problem_type}
- **Statement Thoughts of Basic Problem Type**: {statement_thoughts_of_basic_problem_type}

Please provide the following information in JSON format:

```json
{{
    "current_basic_problem_type": "{current_basic_problem_type}",
    "statement_thoughts_of_basic_problem_type": "{statement_thoughts_of_basic_problem_type}",
    "formulated_subtype": "<subtype>",
    "statement_thoughts_of_subtype":{{
    "statement_thoughts": "<the more precise of statement thoughts>",
    "constraints":
    {{
      "<get the Constraint 1>": "Detailed description of constraint 1",
      "<get the Constraint 2>": "Detailed description of constraint 2"
    }}
    }}
}}
```
"""


DISTILL_MODELING_THOUGHTS = (
    """You are a mathematical formulator working with a team of optimization experts. The objective is to tackle a complex optimization problem.

Please list the steps to formulate a {problem_type} problem and use the Gurobi code to solve it. You need to record some errors that are easy to make during the formulation process. Please output a JSON format.

You are given a specific combinatorial optimization problem, its solution process, and the problem type, along with its statement thoughts.


- **Problem Type**: {problem_type}
- **Statement Thoughts of Problem Type**: {statement_thoughts}
- **Specific Problem**: {specific_problem}
- **Solution step of Specific Problem**: {solution_step}

Your task is to return a modeling thought for this problem type, which includes the following five parts:

1. **problem_type**: The provided problem type.
2. **statement_thoughts**: The provided statement thoughts of the problem type.
3. **reason_flow**: A detailed step-by-step reasoning process for solving a series of problems that belong to a problem type, according to the provided solution process of the specific problem.
4. **example_application**: A detailed example application that matches the specific problem and its solution process.
5. **increment**: a list.


Additionally, in the solution steps, the Gurobi code is included. You must only use the fixed Gurobi code mentioned below in the solution steps. This is the fixed Gurobi code ---- "### Gurobi Code:
```python
"""
    + DEFAULT_CODE_TEMPLATE
    + """```"
Please provide the following information in JSON format:

Here is a modeling thought example:

{{
"Problem Type": "Travelling Sales Person Problem",
"statement_thoughts": {{
    "statement_thoughts": "The Travelling Sales Person Problem involves finding the shortest possible route that visits each city exactly once and returns to the original city. The problem is represented as a matrix of distances between cities.",
    "constraints": {{"Tour Constraints": "Each city must be visited exactly once, forming a single continuous tour.", "Subtour Elimination": "Constraints are necessary to prevent the formation of disconnected subtours."}}
    }},
"Modeling Thoughts": [
    "[Define Decision Variables] Define decision variables for edges \\\\( x_{{ij}} \\\\) and possibly auxiliary variables for MTZ \\\\( u_i \\\\)",
    "[Define Objective Function] Sum of distances multiplied by \\\\( x_{{ij}} \\\\)",
    "[Define Degree Constraints] Each node entered and exited exactly once",
    "[Define Subtour Elimination Constraints] Subtour elimination via MTZ or callbacks",
    "[Comprehensive Verification] Check the common errors in the optimization model",
    "[Write Gurobi Code] Write the Gurobi code to solve the problem.",
    "[Gurobi Code]\\n```python\\n<the fixed Gurobi code>\\n```",
    "[Common Errors to Avoid]\\n1. **Incorrect Subtour Elimination**: Ensure MTZ constraints exclude the starting city and are applied to correct indices.\\n2. **Indexing Mistakes**: Use consistent 0-based or 1-based indexing for cities.\\n3. **Self-Loops**: Explicitly disable \\\\( x_{{ii}} \\\\) variables."
]

}}

Important:
- Use plain JSON without markdown syntax
- Ensure all quotes are properly escaped
- Include all required keys: problem_type, statement_thoughts, reason_flow, example_application, increment
"""
)


ADD_NEW_NODES = """You are a mathematical formulator working with a team of optimization experts. The objective is to tackle a complex optimization problem.

You are given a primary problem type and its statement thoughts. You are also provided with a list of other problem types, each with its statement thoughts.

According statement thoughts, your task is to determine which problem types in the list are subtypes of the given primary problem type. Return a list of problem types that are identified as subtypes of the primary problem type. To be more specific, the subtype contains the constraint form of the primary problem type.
Importantly, the returned subtypes must be provided in the list; if there is no problem type that is a subtype of the given primary problem type in the list, return an empty list.

- **Primary Problem Type**: {primary_problem_type}
- **Statement Thoughts of Primary Problem Type**: {statement_thoughts_type}
- **List of Problem Types**: {list_of_problem_types}

Please provide the following information in JSON format:

```json
{{
    "primary_problem_type": "{primary_problem_type}",
    "matching_subtypes": ["<problem_type>"]

}}
```
"""


NO_THOUGHTS_TEXT = "no reference thoughts available"

MODEL_PLAIN = MODEL_WITH_THOUGHTS.replace("{modeling_thought}", NO_THOUGHTS_TEXT)


TEMPLATES: dict[str, str] = {
    "subproblem_identify": SUBPROBLEM_IDENTIFY,
    "distill_root": DISTILL_ROOT,
    "distill_subtype": DISTILL_SUBTYPE,
    "distill_modeling_thoughts": DISTILL_MODELING_THOUGHTS,
    "add_new_nodes": ADD_NEW_NODES,
    "model_with_thoughts": MODEL_WITH_THOUGHTS,
    "code_correction": CODE_CORRECTION,
    "model_plain": MODEL_PLAIN,
}


def template_placeholders(template_name: str) -> frozenset[str]:
    """The placeholder names a template requires."""
    template = TEMPLATES[template_name]
    fields = set()
    for _literal, field_name, _spec, _conv in string.Formatter().parse(template):
        if field_name:
            fields.add(field_name)
    return frozenset(fields)
