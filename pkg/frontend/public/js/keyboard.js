const TEXT_INPUT_KEYS = new Set(["enter", "escape"]);
function isTextTarget(event) {
    const target = event.target;
    if (!target)
        return false;
    const tag = target.tagName?.toLowerCase();
    return tag === "input" || tag === "textarea" || target.isContentEditable;
}
/**
 * Attach keydown bindings on the window.  While the user is typing in a text
 * field only Enter/Escape fire, so letter shortcuts never eat input.
 * Returns the unbind function.
 */
export function bindKeys(bindings) {
    const handler = (event) => {
        const key = event.key.toLowerCase();
        if (isTextTarget(event) && !TEXT_INPUT_KEYS.has(key))
            return;
        const action = bindings[key];
        if (action) {
            event.preventDefault();
            action(event);
        }
    };
    window.addEventListener("keydown", handler);
    return () => window.removeEventListener("keydown", handler);
}
