def AddTask(description):
    """
    Add a new task to the task list.

    Parameters:
    - description (str): Description of the task
    """
    if not description.strip():
        print("Error: Task description cannot be empty.")
        return

    tasks = load_tasks()
    task_id = len(tasks) + 1
    task = {
        'id': task_id,
        'description': description,
        'completed': False,
        'created_at': datetime.now().isoformat()
    }
    tasks.append(task)
    save_tasks(tasks)
    print(f"Task added: {task_id} - {description}")
