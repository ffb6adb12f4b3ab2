export { ApiClient, ApiRequestError } from "./api.js";
export type { FetchLike } from "./api.js";
export { SessionViewModel } from "./session.js";
export type { UiMessage, UiSessionView } from "./session.js";
export { ChatUi, bootstrap } from "./ui.js";
export * from "./types.js";
