"""Run a plan script in a sampled Heat world: heating away from the microwave fails, then a replan succeeds."""
from __future__ import annotations

from rulebook.planlang import PlanSession
from rulebook.scripted import full_program
from rulebook.scripted.household import read_task
from rulebook.textworld import Episode, TaskType, sample_tasks


def main() -> None:
    episode = Episode(sample_tasks(TaskType.HEAT, 1, 3)[0])
    observation, task = episode.reset()
    print(observation)
    print("Your task is to:", task)
    view = read_task(f"### Initial observation and task:\n{observation}\nYour task is to: {task}")
    session = PlanSession(episode)

    # without knowing that appliances need co-location the program heats in place
    first = session.run_source(full_program(view, ""))
    print("\n-- first cycle --")
    print("\n".join(e.render() for e in first.events[-3:]))
    print("terminal:", first.terminal.kind.value, first.terminal.message)

    # globals persist, so the replan continues with the object already in hand
    second = session.run_source(
        "observation = agent.go_to('microwave_1')\n"
        "observation = agent.heat_with(agent.holding, 'microwave_1')\n"
        f"observation = agent.go_to('{view.first_of(view.params['target'])}')\n"
        f"observation = agent.put_in_or_on(agent.holding, '{view.first_of(view.params['target'])}')\n")
    print("\n-- second cycle --")
    print("\n".join(e.render() for e in second.events))
    print("terminal:", second.terminal.kind.value, "reward", second.terminal.reward)


if __name__ == "__main__":
    main()
