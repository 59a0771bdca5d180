export type KeyBindings = Record<string, (event: KeyboardEvent) => void>;

const TEXT_INPUT_KEYS = new Set(["enter", "escape"]);

function isTextTarget(event: KeyboardEvent): boolean {
  const target = event.target as HTMLElement | null;
  if (!target) return false;
  const tag = target.tagName?.toLowerCase();
  return tag === "input" || tag === "textarea" || target.isContentEditable;
}

/**
 * Attach keydown bindings on the window.  While the user is typing in a text
 * field only Enter/Escape fire, so letter shortcuts never eat input.
 * Returns the unbind function.
 */
export function bindKeys(bindings: KeyBindings): () => void {
  const handler = (event: KeyboardEvent) => {
    const key = event.key.toLowerCase();
    if (isTextTarget(event) && !TEXT_INPUT_KEYS.has(key)) return;
    const action = bindings[key];
    if (action) {
      event.preventDefault();
      action(event);
    }
  };
  window.addEventListener("keydown", handler);
  return () => window.removeEventListener("keydown", handler);
}
