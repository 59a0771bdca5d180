import { AnnoClient } from "./api.js";
import { AnnotateApp } from "./app.js";
function queryParam(name) {
    return new URLSearchParams(window.location.search).get(name);
}
function renderLogin(root) {
    root.innerHTML = `
    <form id="login">
      <h2>annotator sign-in</h2>
      <label>annotator id <input id="annotator-id" autofocus required></label>
      <button type="submit">start labeling</button>
    </form>`;
    root.querySelector("#login").addEventListener("submit", (event) => {
        event.preventDefault();
        const id = root.querySelector("#annotator-id").value.trim();
        if (!id)
            return;
        const params = new URLSearchParams(window.location.search);
        params.set("annotator", id);
        window.location.search = params.toString();
    });
}
export function boot(root) {
    const annotator = queryParam("annotator");
    if (!annotator) {
        renderLogin(root);
        return null;
    }
    const server = queryParam("server") ?? "";
    const token = queryParam("token") ?? undefined;
    const app = new AnnotateApp(root, new AnnoClient(server, token), annotator);
    void app.start();
    return app;
}
const rootElement = document.getElementById("app");
if (rootElement)
    boot(rootElement);
